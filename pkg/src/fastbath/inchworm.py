"""Inchworm Monte Carlo on the triangular propagator grid.

Only nodes ``G_{-n,k}`` with ``0 <= k <= n`` are stepped; the rest of the
grid follows from the jump at the fold, conjugate symmetry and shift
invariance.  Every stage of a step averages over sequences drawn in the
regions ``T_{p,k}``; those sets are built once up front.  Along each
anti-diagonal arrow the fresh batch of every ancestor node is stretched
into the current node, so its linked functionals are carried over.
Nodes right of the fold reuse the batches ending at 0, shifted across
it, with conjugated functionals.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .bath import BathCorrelation, two_point
from .costmodel import CostReport
from .diagrams import lb_connected
from .dyson import evaluate_functionals
from .grid import ZERO_MINUS, ZERO_PLUS, MissingGridValue, PropagatorGrid, interpolate_g
from .sampling import (SamplingConfig, SeqBatch, allocate_inch, density_inch,
                       sample_fresh_inch)
from .spinsys import ModelConfig, dag

__all__ = [
    "PropagatorGrid", "interpolate_g", "InchwormSampleStore", "InchwormResult",
    "prepare_samples", "inchworm_rhs_term", "inchworm_step", "evolve", "run_inchworm",
    "inchworm_counts", "MissingGridValue",
]


@dataclass
class Piece:
    """One block of sequences in ``S_{p,k}``, with provenance."""

    batch: SeqBatch
    L: np.ndarray
    source: Tuple[int, int]
    kind: str  # "fresh", "stretched", "shifted-conjugate" or "translated"


@dataclass
class InchwormSampleStore:
    """Sample sets ``S_{p,k}`` (per order) and their linked functionals."""

    sampling: SamplingConfig
    reuse: bool
    pieces: Dict[Tuple[int, int], Dict[int, List[Piece]]] = field(default_factory=dict)
    fresh: Dict[Tuple[int, int], Dict[int, SeqBatch]] = field(default_factory=dict)
    cost: CostReport = None
    _columns: dict = field(default_factory=dict, repr=False)

    def count(self, p: int, k: int) -> int:
        return sum(pc.batch.n for lst in self.pieces[(p, k)].values() for pc in lst)

    def column(self, k: int, m: int):
        """Stacked ``(values, neg, L, starts)`` of column ``k`` for order ``m``.

        Rows are ordered by ``p`` ascending; ``starts[p]`` is the first row of
        region ``p``, so the regions ``p >= j`` form a suffix.
        """
        key = (k, m)
        if key not in self._columns:
            ps = sorted(p for (p, kk) in self.pieces if kk == k)
            vals, neg, L, starts = [], [], [], {}
            row = 0
            for p in ps:
                starts[p] = row
                for pc in self.pieces[(p, k)][m]:
                    vals.append(pc.batch.values())
                    neg.append(pc.batch.negative_count())
                    L.append(pc.L)
                    row += pc.batch.n
            starts[k] = row
            if vals:
                cat = (np.concatenate(vals), np.concatenate(neg), np.concatenate(L))
            else:
                cat = (np.empty((0, m)), np.empty(0, dtype=np.int64), np.empty(0, dtype=complex))
            self._columns[key] = cat + (starts,)
        return self._columns[key]

    def stratum_total(self, j: int, k: int) -> int:
        """``sum_{p=j}^{k-1} |S_{p,k}|`` over all orders."""
        return sum(self.count(p, k) for p in range(j, k) if (p, k) in self.pieces)


def _bullets(N: int):
    for k in range(0, N + 1):
        for p in range(-N, 0):
            yield p, k


def _arrow_length(p: int, k: int) -> int:
    return min(-1 - p, k)


def prepare_samples(sampling: SamplingConfig, bath: BathCorrelation, reuse: bool = True) -> InchwormSampleStore:
    """Draw every fresh batch and assemble ``S_{p,k}`` with linked functionals.

    With ``reuse`` each fresh batch is evaluated once and its values are
    attached to all stretched, shifted and translated copies.  Without it,
    each copy is evaluated on its own; the resulting values agree bitwise.
    """
    N = sampling.N
    orders = sampling.orders
    store = InchwormSampleStore(sampling=sampling, reuse=reuse, cost=CostReport(orders=orders))
    cost = store.cost
    fresh_L = {}
    node_seconds = {}
    node_fresh = {}
    node_total = {}

    def evaluate(batch, node):
        t0 = time.perf_counter()
        L = evaluate_functionals(bath, batch, linked=True)
        dt = time.perf_counter() - t0
        node_seconds[node] = node_seconds.get(node, 0.0) + dt
        return L, dt

    for p, k in _bullets(N):
        sb = sample_fresh_inch(sampling, p, k)
        store.fresh[(p, k)] = sb.sequences
        node_fresh[(p, k)] = {m: sb.sequences[m].n for m in orders}
        for m in orders:
            cost.add(m, fresh=sb.sequences[m].n)
            if reuse:
                L, dt = evaluate(sb.sequences[m], (p, k))
                fresh_L[(p, k, m)] = L
                cost.add(m, evaluated=sb.sequences[m].n, seconds=dt)

    # bullet nodes: union of stretched fresh batches along the arrow
    for p, k in _bullets(N):
        per_m = {}
        node_total[(p, k)] = {}
        for m in orders:
            lst = []
            for ell in range(_arrow_length(p, k) + 1):
                src = (p + ell, k - ell)
                b = store.fresh[src][m].stretch(ell)
                if reuse:
                    L = fresh_L[src + (m,)]
                else:
                    L, dt = evaluate(b, (p, k))
                    cost.add(m, evaluated=b.n, seconds=dt)
                lst.append(Piece(b, L, src, "fresh" if ell == 0 else "stretched"))
            per_m[m] = lst
            n_tot = sum(pc.batch.n for pc in lst)
            node_total[(p, k)][m] = n_tot
            cost.add(m, total=n_tot)
        store.pieces[(p, k)] = per_m

    # nodes right of the fold: batches ending at 0 shifted by t_k
    for k in range(1, N + 1):
        for p in range(0, k):
            src = (p - k, 0)
            if p - k < -N:
                continue
            per_m = {}
            for m in orders:
                b = store.fresh[src][m].shift_across(k)
                if reuse:
                    L = np.conj(fresh_L[src + (m,)])
                else:
                    L, dt = evaluate(b, (p, k))
                    cost.add(m, evaluated=b.n, seconds=dt)
                per_m[m] = [Piece(b, L, src, "shifted-conjugate")]
            store.pieces[(p, k)] = per_m

    # column t_{-1}: batches ending at 0 translated by -h
    for p in range(-N, -1):
        src = (p + 1, 0)
        per_m = {}
        for m in orders:
            b = store.fresh[src][m].translate_back(1)
            if reuse:
                L = fresh_L[src + (m,)]
            else:
                L, dt = evaluate(b, (p, -1))
                cost.add(m, evaluated=b.n, seconds=dt)
            per_m[m] = [Piece(b, L, src, "translated")]
        store.pieces[(p, -1)] = per_m

    # cumulative counters on the sub-grid of size n
    for n in range(1, N + 1):
        sub = [(p, k) for p, k in _bullets(N) if -p <= n and k <= n]
        cost.step_fresh.append({m: sum(node_fresh[x][m] for x in sub) for m in orders})
        cost.step_total.append({m: sum(node_total[x][m] for x in sub) for m in orders})
        cost.step_seconds.append(sum(node_seconds.get(x, 0.0) for x in sub))
    return store


def inchworm_counts(sampling: SamplingConfig):
    """Fresh and total sequence counts per order over the bullet nodes, from allocation only."""
    N = sampling.N
    alloc = {pk: allocate_inch(sampling, *pk) for pk in _bullets(N)}
    fresh = {m: 0 for m in sampling.orders}
    total = {m: 0 for m in sampling.orders}
    for p, k in _bullets(N):
        for m in sampling.orders:
            fresh[m] += alloc[(p, k)][m]
            total[m] += sum(alloc[(p + ell, k - ell)][m] for ell in range(_arrow_length(p, k) + 1))
    return fresh, total


# -- stepping ----------------------------------------------------------------

def _col_of(label) -> int:
    return 0 if isinstance(label, str) else int(label)


def _sgn(label) -> float:
    if label == ZERO_MINUS:
        return -1.0
    if label == ZERO_PLUS:
        return 1.0
    return 1.0 if label > 0 else -1.0


def _kernel_sum(grid: PropagatorGrid, model: ModelConfig, j, values, neg, L, end, m, weight) -> np.ndarray:
    """``sum weight * i^(m+1) (-1)^#neg W U_I(t_j, s, end) L``."""
    if values.shape[0] == 0:
        return np.zeros((2, 2), dtype=complex)
    U = grid.u_interp_batch(j, values, end)
    coef = np.where(neg % 2 == 1, -L, L) * weight
    S = (coef[:, None, None] * U).sum(axis=0)
    return (1j ** (m + 1)) * (model.coupling @ S)


def _mc_stage(grid, store, model, j: int, end) -> np.ndarray:
    """Monte Carlo average of the memory integral for ``G(t_j, end)``."""
    col = _col_of(end)
    sampling = store.sampling
    total = store.stratum_total(j, col)
    acc = np.zeros((2, 2), dtype=complex)
    if total == 0:
        return acc
    for m in sampling.orders:
        vals, neg, L, starts = store.column(col, m)
        r0 = starts.get(j, None)
        if r0 is None:
            continue
        w = 1.0 / density_inch(sampling, j, col, m)
        acc += _kernel_sum(grid, model, j, vals[r0:], neg[r0:], L[r0:], end, m, w)
    return acc / total


@dataclass
class QuadratureRule:
    """Gauss-Legendre rule applied per ``h`` cell (deterministic mode, ``M_bar = 1``)."""

    bath: BathCorrelation
    points: int = 8

    def stage(self, grid, model, j: int, end) -> np.ndarray:
        col = _col_of(end)
        if col <= j:
            return np.zeros((2, 2), dtype=complex)
        h = grid.h
        x, w = np.polynomial.legendre.leggauss(self.points)
        left = np.arange(j, col) * h
        s = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).reshape(-1, 1)
        wt = np.tile(0.5 * h * w, left.size)
        L = two_point(self.bath, s[:, 0], np.full(s.shape[0], col * h))
        neg = (s[:, 0] < 0.0).astype(np.int64)
        # linked and full functionals coincide for a single pair
        return _kernel_sum(grid, model, j, s, neg, L, end, 1, wt)


def inchworm_rhs_term(model: ModelConfig, bath: BathCorrelation, grid: PropagatorGrid,
                      j: int, seq, k, override=None) -> np.ndarray:
    """Integrand ``sgn(t_k) i^(m+1) (-1)^#neg W U_I(t_j, s, t_k) L_b^c(s, t_k)`` for one sequence."""
    s = np.asarray(seq, dtype=float).reshape(1, -1)
    m = s.shape[1]
    tk = grid.time(k)
    L = np.atleast_1d(lb_connected(bath, np.append(s[0], tk)))
    neg = np.count_nonzero(s < 0.0, axis=1)
    if override is None:
        X = _kernel_sum(grid, model, j, s, neg, L, k, m, 1.0)
    else:
        with grid.overridden(*override):
            X = _kernel_sum(grid, model, j, s, neg, L, k, m, 1.0)
    return _sgn(k) * X


def _previous(j: int, k):
    """Starting node of the step towards ``(j, k)`` and the label of its endpoint."""
    if k == ZERO_MINUS:
        return -1
    if k == 1:
        return ZERO_PLUS
    return k - 1


def inchworm_step(grid: PropagatorGrid, store, model: ModelConfig, j: int, k,
                  stepper: str = "heun", quadrature: QuadratureRule = None) -> np.ndarray:
    """Two-stage step producing ``G_{j,k}`` from ``G_{j,k-1}``; writes it to the grid.

    ``k`` is a positive integer or ``"0-"``.  The step onto ``0-`` starts
    from ``G_{j,-1}``; the step onto ``1`` starts from ``G_{j,0+}``.
    """
    prev = _previous(j, k)
    G_prev = np.array(grid[j, prev])
    if np.isnan(G_prev).any():
        raise MissingGridValue(f"G[{j}, {prev}] is not available")
    h = grid.h

    def stage(end):
        if quadrature is not None:
            return quadrature.stage(grid, model, j, end)
        return _mc_stage(grid, store, model, j, end)

    iH = 1j * model.hamiltonian
    A1 = stage(prev) if prev != j else np.zeros((2, 2), dtype=complex)
    G_star = G_prev + _sgn(prev) * h * (iH @ G_prev + A1)
    if stepper == "euler":
        G = G_star
    else:
        with grid.overridden((j, k), G_star):
            A2 = stage(k)
        G = 0.5 * (G_prev + G_star) + 0.5 * _sgn(k) * h * (iH @ G_star + A2)
    grid[j, k] = G
    return G


@dataclass
class InchwormResult:
    """Completed grid, the diagonal trajectory ``G_{-n,n}`` and cost counters."""

    grid: PropagatorGrid
    times: np.ndarray
    G: np.ndarray
    cost: CostReport
    rho: np.ndarray

    def expectation(self) -> np.ndarray:
        return np.einsum("ij,nji->n", self.rho, self.G)


def evolve(grid: PropagatorGrid, store, model: ModelConfig, stepper: str = "heun",
           quadrature: QuadratureRule = None) -> PropagatorGrid:
    """Fill the whole grid in the dependency-safe order.

    For each ``n``: step to ``G_{-n,0-}``, apply the jump and conjugate
    symmetry at the fold, step along ``G_{-n,l}`` for ``l = 1..n`` (mirroring
    each value to ``G_{-l,n}``), then copy the shift-invariant chains.
    """
    N = grid.N
    O = model.observable
    for n in range(1, N + 1):
        inchworm_step(grid, store, model, -n, ZERO_MINUS, stepper, quadrature)
        grid[-n, ZERO_PLUS] = O @ grid[-n, ZERO_MINUS]
        grid[ZERO_PLUS, n] = dag(grid[-n, ZERO_MINUS])
        grid[ZERO_MINUS, n] = dag(grid[-n, ZERO_PLUS])
        for ell in range(1, n + 1):
            G = inchworm_step(grid, store, model, -n, ell, stepper, quadrature)
            if ell != n:
                grid[-ell, n] = dag(G)
        for ell2 in range(1, N - n + 1):
            grid[-n - ell2, -ell2] = grid[-n, ZERO_MINUS]
            grid[ell2, n + ell2] = grid[ZERO_PLUS, n]
    return grid


def run_inchworm(model: ModelConfig, bath: BathCorrelation, sampling: SamplingConfig,
                 mode: str = "reuse", stepper: str = "heun", quad_points: int = 8) -> InchwormResult:
    """Prepare samples, evolve the grid and extract ``G_{-n,n}`` for ``n = 0..N``."""
    if mode not in ("reuse", "no-reuse", "deterministic"):
        raise ValueError(f"unknown mode {mode!r}")
    if stepper not in ("heun", "euler"):
        raise ValueError(f"unknown stepper {stepper!r}")
    N, h = sampling.N, sampling.h
    grid = PropagatorGrid(N, h, model.observable, model.coupling)
    if mode == "deterministic":
        if sampling.M_bar != 1:
            raise ValueError("deterministic mode supports M_bar = 1 only")
        store, quad = None, QuadratureRule(bath, quad_points)
        cost = CostReport(orders=(1,))
    else:
        store, quad = prepare_samples(sampling, bath, reuse=(mode == "reuse")), None
        cost = store.cost
    evolve(grid, store, model, stepper, quad)
    G = np.empty((N + 1, 2, 2), dtype=complex)
    G[0] = model.observable
    for n in range(1, N + 1):
        G[n] = grid[-n, n]
    return InchwormResult(grid=grid, times=h * np.arange(N + 1), G=G, cost=cost,
                          rho=np.array(model.rho))
