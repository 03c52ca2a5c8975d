"""Time stepping of ``G(-t, t)`` through the Dyson integro-differential equation.

The right-hand side at ``t_i`` is a Monte Carlo average over sequences in
``[-t_i, t_i]``.  Those sequences are the fresh batches of all earlier
steps, stretched to the current step, so their bath functionals can be
carried over instead of recomputed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .bath import BathCorrelation, b_star, two_point
from .costmodel import CostReport
from .diagrams import double_factorial, functional_from_pairs, lb_full
from .sampling import (SamplingConfig, SeqBatch, allocate_dyson, bare_stream,
                       density_dyson, region_volume_dyson, sample_fresh_dyson)
from .spinsys import ModelConfig, commutator_term, dag, evolution, u0_batch

MODES = ("reuse", "no-reuse", "deterministic")
STEPPERS = ("heun", "euler")


@dataclass
class DysonResult:
    """Trajectory ``G_0..G_N`` at ``t_n = n*h`` together with cost counters."""

    times: np.ndarray
    G: np.ndarray
    cost: CostReport
    rho: np.ndarray

    def expectation(self) -> np.ndarray:
        """``tr(rho G_n)`` for every step."""
        return np.einsum("ij,nji->n", self.rho, self.G)


def evaluate_functionals(bath: BathCorrelation, batch: SeqBatch, linked: bool) -> np.ndarray:
    """Bath functional of every sequence in ``batch`` with its endpoint appended."""
    if batch.n == 0:
        return np.empty(0, dtype=complex)
    bp = b_star(bath, batch.pair_dtau())
    return functional_from_pairs(np.atleast_2d(bp), batch.m + 1, linked)


def _weighted_kernel_sum(model: ModelConfig, values: np.ndarray, neg: np.ndarray,
                         L: np.ndarray, t: float, m: int, weight) -> np.ndarray:
    """``sum_s weight * i^(m+1) (-1)^#neg W U0(-t, s, t) L(s)``."""
    if values.shape[0] == 0:
        return np.zeros((2, 2), dtype=complex)
    U = u0_batch(model, -t, values, t)
    coef = np.where(neg % 2 == 1, -L, L) * weight
    S = (coef[:, None, None] * U).sum(axis=0)
    return (1j ** (m + 1)) * (model.coupling @ S)


def dyson_rhs_term(model: ModelConfig, bath: BathCorrelation, seq, t: float) -> np.ndarray:
    """Integrand ``i^(m+1) (-1)^#neg (K + K^dagger)`` with ``K = W U0(-t,s,t) L_b(s,t)``."""
    s = np.asarray(seq, dtype=float).reshape(1, -1)
    m = s.shape[1]
    if np.any(np.abs(s) >= t):
        raise ValueError("sequence must lie inside (-t, t)")
    L = np.atleast_1d(lb_full(bath, np.append(s[0], t)))
    neg = np.count_nonzero(s < 0.0, axis=1)
    X = _weighted_kernel_sum(model, s, neg, L, t, m, 1.0)
    return X + dag(X)


def heun_update(model: ModelConfig, G_prev: np.ndarray, F_prev: np.ndarray,
                F_cur: np.ndarray, h: float) -> np.ndarray:
    """Two-stage predictor-corrector step given the averaged right-hand sides."""
    G_star = G_prev + h * commutator_term(model, G_prev) + h * F_prev
    return 0.5 * (G_prev + G_star) + 0.5 * h * commutator_term(model, G_star) + 0.5 * h * F_cur


def euler_update(model: ModelConfig, G_prev: np.ndarray, F_prev: np.ndarray, h: float) -> np.ndarray:
    return G_prev + h * commutator_term(model, G_prev) + h * F_prev


def heun_step(model: ModelConfig, G_prev, F_prev, F_cur, h):
    """Alias of :func:`heun_update`."""
    return heun_update(model, G_prev, F_prev, F_cur, h)


def _mc_average(model, bath, sampling, fresh, i, reuse, cost, timer) -> np.ndarray:
    """Hermitian Monte Carlo right-hand side at step ``i``."""
    h = sampling.h
    t = i * h
    X = np.zeros((2, 2), dtype=complex)
    M_i = sum(fresh[j].sequences[m].n for j in range(1, i + 1) for m in sampling.orders)
    for m in sampling.orders:
        w = 1.0 / density_dyson(sampling, i, m)
        total = 0
        for j in range(1, i + 1):
            b = fresh[j].sequences[m].stretch(i - j)
            total += b.n
            if reuse:
                L = fresh[j].functionals[m]
            else:
                L = timer(m, b)
            X += _weighted_kernel_sum(model, b.values(), b.negative_count(), L, t, m, w)
        cost.add(m, total=total)
    Y = X / M_i
    return Y + dag(Y)


def run_dyson(model: ModelConfig, bath: BathCorrelation, sampling: SamplingConfig,
              mode: str = "reuse", stepper: str = "heun", quad_points: int = 8) -> DysonResult:
    """Evolve ``G(-t_i, t_i)`` for ``i = 1..N``.

    ``mode="reuse"`` evaluates each bath functional once, on its fresh
    batch.  ``"no-reuse"`` draws the same sequences but recomputes the
    functional of every stretched copy; both modes give identical
    trajectories.  ``"deterministic"`` (``M_bar = 1`` only) replaces the
    Monte Carlo average by Gauss-Legendre quadrature on each ``h`` cell.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if stepper not in STEPPERS:
        raise ValueError(f"unknown stepper {stepper!r}")
    if mode == "deterministic":
        return _run_deterministic(model, bath, sampling, stepper, quad_points)

    N, h = sampling.N, sampling.h
    reuse = mode == "reuse"
    cost = CostReport(orders=sampling.orders)

    def timer(m, batch):
        t0 = time.perf_counter()
        L = evaluate_functionals(bath, batch, linked=False)
        cost.add(m, evaluated=batch.n, seconds=time.perf_counter() - t0)
        return L

    G = np.empty((N + 1, 2, 2), dtype=complex)
    G[0] = model.observable
    F_prev = np.zeros((2, 2), dtype=complex)
    fresh = {}
    for i in range(1, N + 1):
        batch = sample_fresh_dyson(sampling, i)
        for m, seqs in batch.sequences.items():
            cost.add(m, fresh=seqs.n)
            if reuse:
                batch.functionals[m] = timer(m, seqs)
        fresh[i] = batch
        F_cur = _mc_average(model, bath, sampling, fresh, i, reuse, cost, timer)
        if stepper == "heun":
            G[i] = heun_update(model, G[i - 1], F_prev, F_cur, h)
        else:
            G[i] = euler_update(model, G[i - 1], F_prev, h)
        F_prev = F_cur
        cost.close_step()
    return DysonResult(times=h * np.arange(N + 1), G=G, cost=cost, rho=np.array(model.rho))


# -- deterministic validation mode --------------------------------------------

def _quadrature_rhs(model, bath, t_index: int, h: float, nodes, weights) -> np.ndarray:
    t = t_index * h
    left = np.arange(-t_index, t_index) * h
    s = (left[:, None] + 0.5 * h * (nodes[None, :] + 1.0)).reshape(-1, 1)
    w = np.tile(0.5 * h * weights, left.size)
    L = two_point(bath, s[:, 0], np.full(s.shape[0], t))
    neg = (s[:, 0] < 0.0).astype(np.int64)
    X = _weighted_kernel_sum(model, s, neg, L, t, 1, w)
    return X + dag(X)


def _run_deterministic(model, bath, sampling, stepper, quad_points) -> DysonResult:
    if sampling.M_bar != 1:
        raise ValueError("deterministic mode supports M_bar = 1 only")
    N, h = sampling.N, sampling.h
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    G = np.empty((N + 1, 2, 2), dtype=complex)
    G[0] = model.observable
    F_prev = np.zeros((2, 2), dtype=complex)
    for i in range(1, N + 1):
        F_cur = _quadrature_rhs(model, bath, i, h, nodes, weights)
        if stepper == "heun":
            G[i] = heun_update(model, G[i - 1], F_prev, F_cur, h)
        else:
            G[i] = euler_update(model, G[i - 1], F_prev, h)
        F_prev = F_cur
    return DysonResult(times=h * np.arange(N + 1), G=G, cost=CostReport(orders=(1,)),
                       rho=np.array(model.rho))


# -- low-memory variant ---------------------------------------------------------

@dataclass
class PartialSums:
    """Lower-triangular table ``theta[i, k]`` (``1 <= k <= i <= N``) of 2x2 matrices."""

    theta: np.ndarray

    @property
    def filled(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.theta[..., 0, 0])))


def alpha_map(model: ModelConfig, h: float, X: np.ndarray) -> np.ndarray:
    """``X + i h [H, X]``."""
    return X + h * commutator_term(model, X)


def alpha_tilde_map(model: ModelConfig, h: float, X: np.ndarray) -> np.ndarray:
    """``(X + alpha(alpha(X))) / 2``."""
    return 0.5 * (X + alpha_map(model, h, alpha_map(model, h, X)))


def run_dyson_lowmem(model: ModelConfig, bath: BathCorrelation, sampling: SamplingConfig):
    """Heun/Monte Carlo evolution that discards each bath functional after use.

    Each fresh batch is evaluated once and immediately folded into partial
    sums ``theta[i, k]`` for every later step ``i``; the trajectory is then
    rebuilt from the explicit solution of the two-stage recurrence.
    Returns ``(DysonResult, PartialSums)``.
    """
    N, h = sampling.N, sampling.h
    orders = sampling.orders
    cost = CostReport(orders=orders)
    counts = {i: allocate_dyson(sampling, i) for i in range(1, N + 1)}
    M = np.cumsum([0] + [sum(counts[i].values()) for i in range(1, N + 1)])
    theta = np.full((N + 1, N + 1, 2, 2), np.nan, dtype=complex)
    for k in range(1, N + 1):
        batch = sample_fresh_dyson(sampling, k, counts[k])
        live = {}
        for m, seqs in batch.sequences.items():
            t0 = time.perf_counter()
            live[m] = evaluate_functionals(bath, seqs, linked=False)
            cost.add(m, fresh=seqs.n, evaluated=seqs.n, seconds=time.perf_counter() - t0)
        cost.peak_live_functionals = max(cost.peak_live_functionals,
                                         sum(v.size for v in live.values()))
        for i in range(k, N + 1):
            acc = np.zeros((2, 2), dtype=complex)
            for m in orders:
                b = batch.sequences[m].stretch(i - k)
                w = 1.0 / density_dyson(sampling, i, m)
                acc += _weighted_kernel_sum(model, b.values(), b.negative_count(),
                                            live[m], i * h, m, w)
                cost.add(m, total=b.n)
            theta[i, k] = acc / M[i]
        del live
        cost.close_step()

    F = np.zeros((N + 1, 2, 2), dtype=complex)
    for i in range(1, N + 1):
        beta = theta[i, 1:i + 1].sum(axis=0)
        F[i] = beta + dag(beta)

    G = np.empty((N + 1, 2, 2), dtype=complex)
    G[0] = model.observable
    # powers of alpha-tilde applied to O and to (alpha + alpha-tilde) F_k
    O_pow = np.array(model.observable)
    pushed = {}
    for i in range(1, N + 1):
        O_pow = alpha_tilde_map(model, h, O_pow)
        for k in list(pushed):
            pushed[k] = alpha_tilde_map(model, h, pushed[k])
        if i >= 2:
            k = i - 1
            pushed[k] = alpha_map(model, h, F[k]) + alpha_tilde_map(model, h, F[k])
        tail = sum((pushed[k] for k in sorted(pushed)), np.zeros((2, 2), dtype=complex))
        G[i] = O_pow + 0.5 * h * tail + 0.5 * h * F[i]
    res = DysonResult(times=h * np.arange(N + 1), G=G, cost=cost, rho=np.array(model.rho))
    return res, PartialSums(theta=theta)


# -- bare dQMC -----------------------------------------------------------------

def _bare_weights(t: float, M_bar: int, B_emp: float) -> Dict[int, float]:
    return {m: region_volume_dyson(m, 1, t) * double_factorial(m - 1) * B_emp ** (m / 2)
            for m in range(2, M_bar + 2, 2)}


def bare_dqmc_counts(samples: int, t: float, M_bar: int, B_emp: float) -> Dict[int, int]:
    """Stratified counts for the even orders ``2..M_bar+1``, proportional to
    ``|T^(m)| (m-1)!! B^(m/2)``."""
    w = _bare_weights(t, M_bar, B_emp)
    tot = sum(w.values())
    return {m: int(np.rint(samples * w[m] / tot)) for m in w}


def bare_dqmc(model: ModelConfig, bath: BathCorrelation, t: float, samples: int,
              M_bar: int = 1, B_emp: float = 0.2, seed: int = 0) -> np.ndarray:
    """One-shot estimate of ``G(-t, t)`` from the truncated Dyson series.

    Even orders up to ``M_bar + 1`` are sampled uniformly on the simplex of
    ``[-t, t]``; the density of ``(m, s)`` is proportional to
    ``(m-1)!! B^(m/2)``.  The result is in general not Hermitian.
    """
    if not t > 0.0:
        raise ValueError("t must be positive")
    free = evolution(model, -t) @ model.observable @ evolution(model, t)
    counts = bare_dqmc_counts(samples, t, M_bar, B_emp)
    total = sum(counts.values())
    if total == 0:
        return free
    w = _bare_weights(t, M_bar, B_emp)
    lam = sum(w.values())
    acc = np.zeros((2, 2), dtype=complex)
    for m, n in counts.items():
        if n == 0:
            continue
        rng = bare_stream(seed, m)
        s = np.sort(-t + 2.0 * t * rng.random((n, m)), axis=1)
        L = np.atleast_1d(lb_full(bath, s))
        density = w[m] / lam / region_volume_dyson(m, 1, t)
        U = u0_batch(model, -t, s, t)
        neg = np.count_nonzero(s < 0.0, axis=1)
        coef = np.where(neg % 2 == 1, -L, L) / density
        acc += (1j ** m) * (coef[:, None, None] * U).sum(axis=0)
    return free + acc / total
