"""Discretized Ohmic harmonic bath and its two-point correlation.

The bath enters every solver only through the kernel ``B*(dtau)`` where
``dtau = |tau1| - |tau2|``.  Evaluating the kernel through ``dtau`` alone
makes the translation, stretch and reflection invariances exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Rows of the (n, L) trig workspace processed at once.
_CHUNK = 16384


@dataclass(frozen=True)
class BathSpec:
    """Parameters of the Ohmic spectral density and its L-mode discretization.

    ``omega_max`` defaults to ``4 * omega_c``.  ``xi = 0`` is accepted and
    yields an uncoupled bath (every correlation vanishes).
    """

    xi: float
    omega_c: float
    beta: float
    num_modes: int = 400
    omega_max: Optional[float] = None

    def __post_init__(self):
        if self.omega_max is None:
            object.__setattr__(self, "omega_max", 4.0 * self.omega_c)
        if not np.isfinite(self.xi) or self.xi < 0.0:
            raise ValueError("xi must be finite and non-negative")
        for name in ("omega_c", "beta", "omega_max"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0.0:
                raise ValueError(f"{name} must be positive")
        if int(self.num_modes) != self.num_modes or self.num_modes < 1:
            raise ValueError("num_modes must be a positive integer")


@dataclass(frozen=True)
class BathCorrelation:
    """Mode table ``(c_l, omega_l)`` at inverse temperature ``beta``.

    ``re_coef`` and ``im_coef`` are the per-mode weights of the cosine and
    sine sums, precomputed once.
    """

    couplings: np.ndarray
    frequencies: np.ndarray
    beta: float
    re_coef: np.ndarray = field(init=False, repr=False)
    im_coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.couplings, dtype=float)
        w = np.asarray(self.frequencies, dtype=float)
        if c.shape != w.shape or c.ndim != 1:
            raise ValueError("couplings and frequencies must be 1-D of equal length")
        if np.any(w <= 0.0) or np.any(np.diff(w) <= 0.0):
            raise ValueError("frequencies must be positive and strictly increasing")
        c.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "couplings", c)
        object.__setattr__(self, "frequencies", w)
        weight = c**2 / (2.0 * w)
        re = weight / np.tanh(0.5 * self.beta * w)
        im = weight.copy()
        re.setflags(write=False)
        im.setflags(write=False)
        object.__setattr__(self, "re_coef", re)
        object.__setattr__(self, "im_coef", im)

    @property
    def num_modes(self) -> int:
        return self.frequencies.size

    @property
    def is_uncoupled(self) -> bool:
        return not np.any(self.couplings)


def mode_frequencies(spec: BathSpec) -> np.ndarray:
    """Frequencies ``omega_l = -omega_c log(1 - (l/L)(1 - exp(-omega_max/omega_c)))``."""
    L = spec.num_modes
    q = -np.expm1(-spec.omega_max / spec.omega_c)
    l = np.arange(1, L + 1, dtype=float)
    return -spec.omega_c * np.log1p(-(l / L) * q)


def build_bath(spec: BathSpec) -> BathCorrelation:
    """Discretize the Ohmic spectral density into ``spec.num_modes`` modes."""
    w = mode_frequencies(spec)
    q = -np.expm1(-spec.omega_max / spec.omega_c)
    c = w * np.sqrt(spec.xi * spec.omega_c * q / spec.num_modes)
    return BathCorrelation(couplings=c, frequencies=w, beta=spec.beta)


def b_star(bath: BathCorrelation, dtau) -> np.ndarray | complex:
    """Kernel ``B*(dtau)``, vectorized over ``dtau``.

    The sums are taken at ``|dtau|`` and the imaginary part is flipped for
    negative arguments, so ``b_star(-x) == conj(b_star(x))`` holds bitwise.
    """
    x = np.asarray(dtau, dtype=float)
    scalar = x.ndim == 0
    flat = x.reshape(-1)
    out = np.empty(flat.size, dtype=complex)
    w = bath.frequencies
    for lo in range(0, flat.size, _CHUNK):
        ax = np.abs(flat[lo:lo + _CHUNK])
        phase = np.multiply.outer(ax, w)
        # sequential row sums keep each value independent of the batch shape
        re = np.cumsum(np.cos(phase) * bath.re_coef, axis=1)[:, -1]
        im = np.cumsum(np.sin(phase) * bath.im_coef, axis=1)[:, -1]
        neg = flat[lo:lo + _CHUNK] < 0.0
        out.real[lo:lo + _CHUNK] = re
        out.imag[lo:lo + _CHUNK] = np.where(neg, im, -im)
    if scalar:
        return complex(out[0])
    return out.reshape(x.shape)


def two_point(bath: BathCorrelation, tau1, tau2):
    """Two-point correlation ``B(tau1, tau2) = B*(|tau1| - |tau2|)`` for ``tau1 <= tau2``."""
    t1 = np.asarray(tau1, dtype=float)
    t2 = np.asarray(tau2, dtype=float)
    if np.any(t1 > t2):
        raise ValueError("two_point requires tau1 <= tau2")
    return b_star(bath, np.abs(t1) - np.abs(t2))


class BStarTable:
    """Optional cache of ``B*`` on a uniform grid, looked up by nearest node.

    Approximate by design; the solvers never use it unless asked to.
    """

    def __init__(self, bath: BathCorrelation, spacing: float, max_abs: float):
        if spacing <= 0.0 or max_abs <= 0.0:
            raise ValueError("spacing and max_abs must be positive")
        self.spacing = float(spacing)
        n = int(np.ceil(max_abs / spacing))
        self._nodes = np.arange(n + 1) * self.spacing
        self._values = b_star(bath, self._nodes)

    def __call__(self, dtau):
        x = np.asarray(dtau, dtype=float)
        idx = np.rint(np.abs(x) / self.spacing).astype(np.int64)
        if np.any(idx >= self._values.size):
            raise ValueError("dtau outside the cached range")
        v = self._values[idx]
        return np.where(x < 0.0, np.conj(v), v)
