"""Closed-form savings ratios of functional reuse, and runtime cost reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping

import numpy as np

from .diagrams import double_factorial
from .sampling import region_volume_inch, region_volume_inch_fresh

# Per-order growth of the linked-functional evaluation cost.
INCH_ALPHA = 2.1258


@dataclass
class CostReport:
    """Counters of bath-functional work, keyed by order ``m``.

    ``fresh_count`` and ``total_count`` are the numbers of distinct and of
    used sequences; ``evaluations`` counts functionals actually computed
    (equal to ``fresh_count`` with reuse, ``total_count`` without).
    ``step_fresh`` / ``step_total`` hold the cumulative counts after each
    outer step and ``step_seconds`` the cumulative bath time.
    """

    orders: tuple
    fresh_count: Dict[int, int] = field(default_factory=dict)
    total_count: Dict[int, int] = field(default_factory=dict)
    evaluations: Dict[int, int] = field(default_factory=dict)
    wall_seconds: Dict[int, float] = field(default_factory=dict)
    step_fresh: List[Dict[int, int]] = field(default_factory=list)
    step_total: List[Dict[int, int]] = field(default_factory=list)
    step_seconds: List[float] = field(default_factory=list)
    peak_live_functionals: int = 0

    def __post_init__(self):
        for m in self.orders:
            self.fresh_count.setdefault(m, 0)
            self.total_count.setdefault(m, 0)
            self.evaluations.setdefault(m, 0)
            self.wall_seconds.setdefault(m, 0.0)

    def add(self, m: int, fresh: int = 0, total: int = 0, evaluated: int = 0, seconds: float = 0.0):
        self.fresh_count[m] += fresh
        self.total_count[m] += total
        self.evaluations[m] += evaluated
        self.wall_seconds[m] += seconds

    def close_step(self):
        self.step_fresh.append(dict(self.fresh_count))
        self.step_total.append(dict(self.total_count))
        self.step_seconds.append(float(sum(self.wall_seconds.values())))

    def mean_seconds(self) -> Dict[int, float]:
        """Mean wall time per functional evaluation for each order."""
        return {m: (self.wall_seconds[m] / self.evaluations[m]) if self.evaluations[m] else float("nan")
                for m in self.orders}

    def ratio(self, m: int) -> float:
        """Measured saving ``1 - fresh/total`` for order ``m``."""
        tot = self.total_count[m]
        return 1.0 - self.fresh_count[m] / tot if tot else 0.0

    def to_json_dict(self) -> dict:
        return {str(m): {"fresh_count": int(self.fresh_count[m]),
                         "total_count": int(self.total_count[m]),
                         "wall_seconds": float(self.wall_seconds[m])}
                for m in self.orders}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _power_sum(lo: int, hi: int, m: int) -> int:
    return sum(j ** m for j in range(lo, hi + 1))


def r_dyson(m: int, N: int) -> float:
    """Fraction of functional evaluations saved over ``N`` Dyson steps."""
    if m < 1 or N < 1:
        raise ValueError("need m >= 1 and N >= 1")
    return 1.0 - N ** m / _power_sum(1, N, m)


def r_dyson_asymptotic(m: int, N: int) -> float:
    """Large-``N`` form ``1 - (m+1)/N``."""
    return 1.0 - (m + 1) / N


def r_inch(m: int, N: int) -> float:
    """Fraction of linked-functional evaluations saved on an ``N``-step inchworm grid."""
    if m < 1 or N < 1:
        raise ValueError("need m >= 1 and N >= 1")
    num = (2 * N) ** m + (2 * N - 1) ** m - N ** m - (N - 1) ** m
    den = _power_sum(N + 1, 2 * N, m) - _power_sum(1, N - 1, m)
    return 1.0 - num / den


def r_inch_asymptotic(m: int, N: int) -> float:
    """Large-``N`` form ``1 - (1 - 2^-(m+1)) / (1 - 2^-m) * (m+1)/N``."""
    return 1.0 - (1.0 - 0.5 ** (m + 1)) / (1.0 - 0.5 ** m) * (m + 1) / N


def r_time(weights: Mapping[int, float], fresh: Mapping[int, float], total: Mapping[int, float]) -> float:
    """Time saving ``1 - sum(fresh*w) / sum(total*w)`` over orders."""
    if set(weights) != set(fresh) or set(fresh) != set(total):
        raise ValueError("weights and counts must cover the same orders")
    num = sum(fresh[m] * weights[m] for m in weights)
    den = sum(total[m] * weights[m] for m in weights)
    return 1.0 - num / den if den else 0.0


def model_weights(orders, solver: str) -> Dict[int, float]:
    """Relative per-evaluation cost: ``2^m`` for the full functional, ``alpha^m`` for the linked one."""
    base = 2.0 if solver == "dyson" else INCH_ALPHA
    return {m: base ** m for m in orders}


def predicted_counts_dyson(M0_hat: float, B_emp: float, h: float, n: int, m: int):
    """Continuum sample counts after ``n`` Dyson steps: ``(fresh, total)``.

    ``fresh ~ M0/(2Bh) * B^((m+1)/2) (2 t_n)^m / (m-1)!!`` and ``total``
    sums the same expression over ``t_1..t_n``.
    """
    c = M0_hat / (2.0 * B_emp * h) * B_emp ** ((m + 1) / 2) / double_factorial(m - 1)
    fresh = c * (2.0 * n * h) ** m
    total = c * sum((2.0 * i * h) ** m for i in range(1, n + 1))
    return fresh, total


def predicted_counts_inch(M0_hat: float, B_emp: float, h: float, N: int, m: int):
    """Continuum sample counts over the bullet nodes of an ``N``-step grid: ``(fresh, total)``.

    Every bullet ``(p, k)`` holds ``M0/(Bh) * B^((m+1)/2) * m!! * |T_{p,k}^(m)|``
    sequences in total; fresh counts sum the fresh volumes.
    """
    c = M0_hat / (B_emp * h) * B_emp ** ((m + 1) / 2) * double_factorial(m)
    fresh = total = 0.0
    for p in range(-N, 0):
        for k in range(0, N + 1):
            fresh += c * region_volume_inch_fresh(m, p, k, h)
            total += c * region_volume_inch(m, p, k, h)
    return fresh, total


def ratio_table(orders, N: int, solver: str):
    """Rows ``(n, R^(m)(n) for each m)`` for ``n = 1..N``."""
    f = r_dyson if solver == "dyson" else r_inch
    return [(n, [f(m, n) for m in orders]) for n in range(1, N + 1)]
