"""Two-level system algebra: Hamiltonian, bare propagator and path functionals.

Stacks of 2x2 matrices have shape ``(..., 2, 2)``.  Products of stacks go
through :func:`mul2`, an explicit 2x2 formula that is several times faster
than ``np.matmul`` on long stacks of tiny matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

_HERM_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=complex)
    if out.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Spin-boson system: ``H = epsilon*sz + delta*sx``, coupling ``W``,
    observable ``O`` and initial state ``rho``."""

    epsilon: float = 1.0
    delta: float = 1.0
    observable: np.ndarray = field(default_factory=lambda: SIGMA_Z.copy())
    coupling: np.ndarray = field(default_factory=lambda: SIGMA_Z.copy())
    rho: np.ndarray = field(default_factory=lambda: np.array([[1, 0], [0, 0]], dtype=complex))

    def __post_init__(self):
        for name in ("observable", "coupling", "rho"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (np.isfinite(self.epsilon) and np.isfinite(self.delta)):
            raise ValueError("epsilon and delta must be finite")
        if not is_hermitian(self.observable):
            raise ValueError("observable must be Hermitian")
        if not is_hermitian(self.rho) or abs(np.trace(self.rho) - 1.0) > _HERM_TOL:
            raise ValueError("rho must be Hermitian with unit trace")

    @property
    def hamiltonian(self) -> np.ndarray:
        return self.epsilon * SIGMA_Z + self.delta * SIGMA_X

    @property
    def omega(self) -> float:
        """Half level splitting ``|(epsilon, delta)|``."""
        return float(np.hypot(self.epsilon, self.delta))


def is_hermitian(a, tol: float = _HERM_TOL) -> bool:
    a = np.asarray(a)
    return bool(np.max(np.abs(a - dag(a)), initial=0.0) <= tol)


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def mul2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of (broadcast) stacks of 2x2 matrices."""
    a00, a01, a10, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
    b00, b01, b10, b11 = b[..., 0, 0], b[..., 0, 1], b[..., 1, 0], b[..., 1, 1]
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape, dtype=complex)
    out[..., 0, 0] = a00 * b00 + a01 * b10
    out[..., 0, 1] = a00 * b01 + a01 * b11
    out[..., 1, 0] = a10 * b00 + a11 * b10
    out[..., 1, 1] = a10 * b01 + a11 * b11
    return out


def commutator_term(cfg: ModelConfig, g: np.ndarray) -> np.ndarray:
    """``i [H, G]``."""
    H = cfg.hamiltonian
    return 1j * (H @ g - g @ H)


def evolution(cfg: ModelConfig, tau) -> np.ndarray:
    """``exp(-i tau H)`` in closed form, vectorized over ``tau``."""
    tau = np.asarray(tau, dtype=float)
    w = cfg.omega
    c = np.cos(w * tau)
    s = tau * np.sinc(w * tau / np.pi)  # sin(w tau)/w, safe at w = 0
    out = np.empty(tau.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c - 1j * s * cfg.epsilon
    out[..., 1, 1] = c + 1j * s * cfg.epsilon
    out[..., 0, 1] = -1j * s * cfg.delta
    out[..., 1, 0] = -1j * s * cfg.delta
    return out


def bare_propagators(cfg: ModelConfig, s_i, s_f) -> np.ndarray:
    """Vectorized bare propagator ``G_s^(0)(s_i, s_f)`` (broadcast inputs)."""
    a, b = np.broadcast_arrays(np.asarray(s_i, dtype=float), np.asarray(s_f, dtype=float))
    if np.any(a > b):
        raise ValueError("bare propagator requires s_i <= s_f")
    out = np.empty(a.shape + (2, 2), dtype=complex)
    neg = b < 0.0
    pos = a >= 0.0
    cross = ~(neg | pos)
    if np.any(neg):
        out[neg] = evolution(cfg, b[neg] - a[neg])
    if np.any(pos):
        out[pos] = evolution(cfg, a[pos] - b[pos])
    if np.any(cross):
        left = evolution(cfg, -b[cross])
        right = evolution(cfg, -a[cross])
        out[cross] = mul2(mul2(left, cfg.observable), right)
    return out


def bare_propagator(cfg: ModelConfig, s_i: float, s_f: float) -> np.ndarray:
    """Bare propagator for one pair of times.

    ``exp(-i(s_f-s_i)H)`` for ``s_i <= s_f < 0``; ``exp(-i(s_i-s_f)H)`` for
    ``0 <= s_i <= s_f``; ``exp(i s_f H) O exp(i s_i H)`` across the fold.
    """
    return bare_propagators(cfg, s_i, s_f)


def _check_ordered(s_i, times, s_f) -> None:
    full = np.concatenate(
        [np.broadcast_to(np.asarray(s_i, float)[..., None], times.shape[:-1] + (1,)),
         times,
         np.broadcast_to(np.asarray(s_f, float)[..., None], times.shape[:-1] + (1,))],
        axis=-1)
    if np.any(np.diff(full, axis=-1) < 0.0):
        raise ValueError("times must satisfy s_i <= s_1 <= ... <= s_m <= s_f")


def u0_batch(cfg: ModelConfig, s_i, times: np.ndarray, s_f) -> np.ndarray:
    """``G(s_m, s_f) W G(s_{m-1}, s_m) W ... W G(s_i, s_1)`` for each row of ``times``.

    ``times`` has shape ``(n, m)``; ``s_i`` and ``s_f`` are scalars or
    length-``n`` arrays.
    """
    times = np.asarray(times, dtype=float)
    n, m = times.shape
    s_i = np.broadcast_to(np.asarray(s_i, float), (n,))
    s_f = np.broadcast_to(np.asarray(s_f, float), (n,))
    _check_ordered(s_i, times, s_f)
    if m == 0:
        return bare_propagators(cfg, s_i, s_f)
    W = cfg.coupling
    acc = bare_propagators(cfg, s_i, times[:, 0])
    for q in range(1, m):
        acc = mul2(bare_propagators(cfg, times[:, q - 1], times[:, q]), mul2(W, acc))
    return mul2(bare_propagators(cfg, times[:, -1], s_f), mul2(W, acc))


def u0_functional(cfg: ModelConfig, s_i: float, times, s_f: float) -> np.ndarray:
    """System functional ``U^(0)(s_i, s, s_f)`` for one sequence."""
    t = np.asarray(times, dtype=float).reshape(1, -1)
    return u0_batch(cfg, s_i, t, s_f)[0]


def u_interp(grid, s_i, times, s_f, override=None) -> np.ndarray:
    """Interpolated functional ``U_I(s_i, s, s_f)`` for one sequence.

    ``s_i`` and ``s_f`` are grid node labels (see
    :class:`fastbath.grid.PropagatorGrid`).  ``override`` is an optional
    ``((j, k), G)`` whose value replaces the stored node during the call.
    """
    t = np.asarray(times, dtype=float).reshape(1, -1)
    if override is None:
        return grid.u_interp_batch(s_i, t, s_f)[0]
    node, value = override
    with grid.overridden(node, value):
        return grid.u_interp_batch(s_i, t, s_f)[0]
