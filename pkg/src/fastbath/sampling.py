"""Stratified sampling of ordered time sequences, allocation and densities.

A batch of sequences is held in an exact form: each point is stored as
``sign * (cell*h + frac)``.  Moving a point away from the fold by ``j*h``
only changes the integer ``cell``, so every difference ``|a| - |b|`` is
recomputed to the same bits after a stretch.  That is what makes cached
bath functionals interchangeable with freshly computed ones.

Random streams are keyed by region and order ``m``; two runs with the
same seed see identical batches no matter which caching mode they use.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial
from typing import Dict, Optional, Tuple

import numpy as np

from .diagrams import double_factorial

_TAG_DYSON = 1
_TAG_INCH = 2
_TAG_BARE = 3
_TAG_REP = 4
_OFFSET = 1 << 20


@dataclass(frozen=True)
class SamplingConfig:
    """Monte Carlo settings: empirical constant ``B_emp``, truncation
    ``M_bar`` (odd), initial sample count ``M0_hat``, step ``h``, step
    count ``N`` and ``seed``."""

    B_emp: float
    M_bar: int
    M0_hat: int
    h: float
    N: int
    seed: int = 0

    def __post_init__(self):
        if not self.B_emp > 0.0:
            raise ValueError("B_emp must be positive")
        if int(self.M_bar) != self.M_bar or self.M_bar < 1 or self.M_bar % 2 == 0:
            raise ValueError("M_bar must be a positive odd integer")
        if int(self.M0_hat) != self.M0_hat or self.M0_hat < 1:
            raise ValueError("M0_hat must be a positive integer")
        if not self.h > 0.0:
            raise ValueError("h must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    @property
    def orders(self) -> tuple:
        return tuple(range(1, self.M_bar + 1, 2))

    @property
    def t_max(self) -> float:
        return self.N * self.h


# -- exact sequence batches --------------------------------------------------

@dataclass(frozen=True)
class SeqBatch:
    """``n`` sorted sequences of ``m`` points plus a common endpoint.

    Point value is ``sign * (cell*h + frac)``; the endpoint is
    ``end_sign * end_cell * h``.  Non-negative values (and the endpoint 0)
    carry ``sign = +1``.
    """

    h: float
    sign: np.ndarray
    cell: np.ndarray
    frac: np.ndarray
    end_sign: int
    end_cell: int

    @property
    def n(self) -> int:
        return self.sign.shape[0]

    @property
    def m(self) -> int:
        return self.sign.shape[1]

    def values(self) -> np.ndarray:
        return self.sign * (self.cell * self.h + self.frac)

    @property
    def end_value(self) -> float:
        return self.end_sign * self.end_cell * self.h

    def negative_count(self) -> np.ndarray:
        return np.count_nonzero(self.sign < 0, axis=1)

    def stretch(self, j: int) -> "SeqBatch":
        """Move every point (and the endpoint) away from 0 by ``j*h``."""
        if j < 0:
            raise ValueError("stretch needs j >= 0")
        if j == 0:
            return self
        return replace(self, cell=self.cell + j, end_cell=self.end_cell + j)

    def shift_across(self, k: int) -> "SeqBatch":
        """Translate a batch on ``[-t, 0]`` with endpoint 0 by ``+k*h``.

        Points become positive with ``cell' = k - cell`` and ``frac' = -frac``,
        so every difference ``|a| - |b|`` flips sign exactly.
        """
        if self.end_cell != 0 or np.any(self.sign > 0):
            raise ValueError("shift_across needs a non-positive batch ending at 0")
        return replace(self, sign=np.ones_like(self.sign), cell=k - self.cell,
                       frac=-self.frac, end_sign=1, end_cell=k)

    def translate_back(self, q: int) -> "SeqBatch":
        """Translate a non-positive batch by ``-q*h`` (points and endpoint)."""
        if np.any(self.sign > 0) or (self.end_sign > 0 and self.end_cell != 0):
            raise ValueError("translate_back needs a non-positive batch")
        return replace(self, cell=self.cell + q, end_sign=-1, end_cell=self.end_cell + q)

    def pair_dtau(self) -> np.ndarray:
        """``|a| - |b|`` for all point pairs ``a < b`` including the endpoint.

        Columns follow ``np.triu_indices(m + 1, 1)``.
        """
        n, m = self.sign.shape
        cell = np.empty((n, m + 1), dtype=np.int64)
        frac = np.empty((n, m + 1), dtype=float)
        cell[:, :m] = self.cell
        cell[:, m] = self.end_cell
        frac[:, :m] = self.frac
        frac[:, m] = 0.0
        a, b = np.triu_indices(m + 1, 1)
        return (cell[:, a] - cell[:, b]) * self.h + (frac[:, a] - frac[:, b])

    def take(self, rows) -> "SeqBatch":
        return replace(self, sign=self.sign[rows], cell=self.cell[rows], frac=self.frac[rows])


def batch_from_values(values: np.ndarray, h: float, end_value_cells: int) -> SeqBatch:
    """Wrap raw sorted values (fresh samples) with an endpoint at ``end_value_cells*h``."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("values must be 2-D (n, m)")
    sign = np.where(v < 0.0, -1, 1).astype(np.int8)
    return SeqBatch(h=h, sign=sign, cell=np.zeros(v.shape, dtype=np.int64),
                    frac=np.abs(v), end_sign=1 if end_value_cells >= 0 else -1,
                    end_cell=abs(int(end_value_cells)))


def concat_batches(batches) -> Tuple[np.ndarray, np.ndarray]:
    """Stack point values and negative-point parities of batches sharing ``m``."""
    vals = [b.values() for b in batches]
    neg = [b.negative_count() for b in batches]
    return np.concatenate(vals), np.concatenate(neg)


@dataclass
class SampleBatch:
    """Fresh sequences of one region, split by order, with cached functionals."""

    region: tuple
    sequences: Dict[int, SeqBatch]
    functionals: Dict[int, np.ndarray] = field(default_factory=dict)

    def counts(self) -> Dict[int, int]:
        return {m: b.n for m, b in self.sequences.items()}


def stretch(seq, j: int, h: float) -> np.ndarray:
    """Real-valued stretch: ``s + j*h`` for ``s >= 0`` and ``s - j*h`` otherwise."""
    s = np.asarray(seq, dtype=float)
    if j < 0:
        raise ValueError("stretch needs j >= 0")
    return np.where(s >= 0.0, s + j * h, s - j * h)


# -- volumes -----------------------------------------------------------------

def region_volume_dyson(m: int, i: int, h: float) -> float:
    """``|T_i^(m)| = (2 t_i)^m / m!``."""
    return (2.0 * i * h) ** m / factorial(m)


def region_volume_dyson_fresh(m: int, i: int, h: float) -> float:
    """``|T_hat_i^(m)| = ((2 t_i)^m - (2 t_{i-1})^m) / m!``."""
    if i < 1:
        raise ValueError("step index must be >= 1")
    return ((2.0 * i * h) ** m - (2.0 * (i - 1) * h) ** m) / factorial(m)


def _check_pk(p: int, k: int) -> None:
    if p > -1 or k < 0:
        raise ValueError(f"region ({p}, {k}) needs p <= -1 and k >= 0")


def region_volume_inch(m: int, p: int, k: int, h: float) -> float:
    """``|T_{p,k}^(m)| = (t_{k-p}^m - t_{k-p-1}^m) / m!``."""
    _check_pk(p, k)
    d = k - p
    return (((d * h) ** m) - ((d - 1) * h) ** m) / factorial(m)


def region_volume_inch_fresh(m: int, p: int, k: int, h: float) -> float:
    """Volume of ``T_{p,k}^(m)`` not covered by stretching ``T_{p+1,k-1}^(m)``."""
    full = region_volume_inch(m, p, k, h)
    if p == -1 or k == 0:
        return full
    return full - region_volume_inch(m, p + 1, k - 1, h)


# -- allocation and densities ------------------------------------------------

def _weight(m: int, B: float) -> float:
    return double_factorial(m) * B ** ((m + 1) / 2)


def allocate_dyson(cfg: SamplingConfig, i: int) -> Dict[int, int]:
    """Fresh sample counts ``M_hat_i^(m)`` for step ``i``."""
    lam = 2.0 * cfg.B_emp * cfg.h
    out = {}
    for m in cfg.orders:
        if m == 1 and i == 1:
            out[m] = cfg.M0_hat
            continue
        x = cfg.M0_hat / lam * region_volume_dyson_fresh(m, i, cfg.h) * _weight(m, cfg.B_emp)
        out[m] = int(np.rint(x))
    return out


def allocate_inch(cfg: SamplingConfig, p: int, k: int) -> Dict[int, int]:
    """Fresh sample counts ``M_hat_{p,k}^(m)`` for the bullet node ``(p, k)``."""
    lam = cfg.B_emp * cfg.h
    out = {}
    for m in cfg.orders:
        if m == 1 and (p == -1 or k == 0):
            out[m] = cfg.M0_hat
            continue
        x = cfg.M0_hat / lam * region_volume_inch_fresh(m, p, k, cfg.h) * _weight(m, cfg.B_emp)
        out[m] = int(np.rint(x))
    return out


def density_dyson(cfg: SamplingConfig, i: int, m: int) -> float:
    """Density of ``(m, s)`` over ``U_m T_i^(m)``, constant in ``s``."""
    t = i * cfg.h
    lam = sum((2.0 * t) ** mm / double_factorial(mm - 1) * cfg.B_emp ** ((mm + 1) / 2)
              for mm in cfg.orders)
    return _weight(m, cfg.B_emp) / lam


def density_inch(cfg: SamplingConfig, j: int, k: int, m: int) -> float:
    """Density of ``(m, s)`` over ``U_{p=j..k-1} T_{p,k}^(m)``."""
    t = (k - j) * cfg.h
    lam = sum(t ** mm / double_factorial(mm - 1) * cfg.B_emp ** ((mm + 1) / 2)
              for mm in cfg.orders)
    return _weight(m, cfg.B_emp) / lam


# -- random streams ----------------------------------------------------------

def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for the region ``key``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(x) + _OFFSET for x in key))
    return np.random.Generator(np.random.Philox(ss))


def repetition_seeds(seed: int, count: int, level: int = 0) -> list:
    """Seeds for ``count`` independent repetitions derived from ``seed`` and ``level``."""
    ss = np.random.SeedSequence(seed, spawn_key=(_TAG_REP, int(level)))
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> 1) for c in ss.spawn(count)]


def _draw_until(rng, need: int, draw, accept_rate: float) -> np.ndarray:
    out = []
    have = 0
    while have < need:
        size = int(np.ceil((need - have) / max(accept_rate, 1e-3) * 1.1)) + 8
        s = draw(rng, size)
        s = s[draw.accept(s)]
        out.append(s)
        have += s.shape[0]
    return np.concatenate(out)[:need]


class _DysonDraw:
    def __init__(self, t: float, h: float, m: int, reject: bool):
        self.t, self.h, self.m, self.reject = t, h, m, reject

    def __call__(self, rng, size):
        return np.sort(-self.t + 2.0 * self.t * rng.random((size, self.m)), axis=1)

    def accept(self, s):
        ok = np.all((s != 0.0) & (np.abs(s) != self.h), axis=1)
        if self.reject:
            ok &= np.any(np.abs(s) < self.h, axis=1)
        return ok


class _InchDraw:
    def __init__(self, p: int, k: int, h: float, m: int, reject: bool):
        self.tk = k * h
        self.d0 = (k - p - 1) * h
        self.d1 = (k - p) * h
        self.h, self.m, self.reject = h, m, reject

    def __call__(self, rng, size):
        m = self.m
        u = rng.random((size, m))
        D = (self.d0 ** m + u[:, 0] * (self.d1 ** m - self.d0 ** m)) ** (1.0 / m)
        s1 = self.tk - D
        rest = np.sort(u[:, 1:], axis=1)
        return np.concatenate([s1[:, None], s1[:, None] + D[:, None] * rest], axis=1)

    def accept(self, s):
        ok = np.all((s != 0.0) & (np.abs(s) != self.h), axis=1)
        if self.reject:
            ok &= np.any(np.abs(s) < self.h, axis=1)
        return ok


def sample_fresh_dyson(cfg: SamplingConfig, i: int, counts: Optional[Dict[int, int]] = None) -> SampleBatch:
    """Uniform samples on the fresh regions ``T_hat_i^(m)`` for every order."""
    if i < 1:
        raise ValueError("step index must be >= 1")
    counts = allocate_dyson(cfg, i) if counts is None else counts
    t = i * cfg.h
    seqs = {}
    for m in cfg.orders:
        need = counts.get(m, 0)
        if need:
            rng = stream(cfg.seed, _TAG_DYSON, i, m)
            rate = 1.0 - ((i - 1) / i) ** m
            vals = _draw_until(rng, need, _DysonDraw(t, cfg.h, m, i > 1), rate)
        else:
            vals = np.empty((0, m))
        seqs[m] = batch_from_values(vals, cfg.h, i)
    return SampleBatch(region=(i,), sequences=seqs)


def sample_fresh_inch(cfg: SamplingConfig, p: int, k: int, counts: Optional[Dict[int, int]] = None) -> SampleBatch:
    """Uniform samples on the fresh regions ``T_hat_{p,k}^(m)`` for every order."""
    _check_pk(p, k)
    counts = allocate_inch(cfg, p, k) if counts is None else counts
    seqs = {}
    reject = not (p == -1 or k == 0)
    for m in cfg.orders:
        need = counts.get(m, 0)
        if need:
            if reject and m == 1:
                raise ValueError("order 1 has no fresh volume away from the arrow heads")
            rng = stream(cfg.seed, _TAG_INCH, p, k, m)
            vol = region_volume_inch(m, p, k, cfg.h)
            rate = region_volume_inch_fresh(m, p, k, cfg.h) / vol if reject else 1.0
            vals = _draw_until(rng, need, _InchDraw(p, k, cfg.h, m, reject), rate)
        else:
            vals = np.empty((0, m))
        seqs[m] = batch_from_values(vals, cfg.h, k)
    return SampleBatch(region=(p, k), sequences=seqs)


def bare_stream(seed: int, m: int) -> np.random.Generator:
    return stream(seed, _TAG_BARE, m)


# -- membership predicates ---------------------------------------------------

def _sorted_rows(s: np.ndarray) -> np.ndarray:
    return np.all(np.diff(s, axis=1) >= 0.0, axis=1)


def in_dyson_region(s: np.ndarray, i: int, h: float, fresh: bool = False, tol: float = 1e-12) -> np.ndarray:
    """Row-wise membership in ``T_i^(m)`` (or ``T_hat_i^(m)``)."""
    s = np.atleast_2d(s)
    t = i * h
    ok = _sorted_rows(s) & np.all(np.abs(s) <= t + tol, axis=1)
    if fresh and i > 1:
        ok &= np.any(np.abs(s) < h, axis=1)
    return ok


def in_inch_region(s: np.ndarray, p: int, k: int, h: float, fresh: bool = False, tol: float = 1e-12) -> np.ndarray:
    """Row-wise membership in ``T_{p,k}^(m)`` (or its fresh part)."""
    s = np.atleast_2d(s)
    ok = (_sorted_rows(s) & (s[:, 0] >= p * h - tol) & (s[:, 0] <= (p + 1) * h + tol)
          & (s[:, -1] <= k * h + tol))
    if fresh and not (p == -1 or k == 0):
        ok &= np.any(np.abs(s) < h, axis=1)
    return ok
