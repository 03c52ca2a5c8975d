"""Wick pairings, linkedness and the bath influence functionals.

Points are indexed from 0.  A pairing of ``M`` points is a tuple of
``M/2`` pairs ``(a, b)`` with ``a < b``.  Pairings are produced in a fixed
lexicographic order (the first free point is paired with each later point
in turn) so that every summation below is reproducible to the last bit.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import numpy as np

from .bath import BathCorrelation, b_star

Pairing = Tuple[Tuple[int, int], ...]

MAX_POINTS = 14

# Target size of the (rows, pairings) product workspace.
_WORK = 1 << 21


def _check_even(M: int, max_points: int) -> None:
    if M < 0 or M % 2:
        raise ValueError(f"number of points must be even, got {M}")
    if M > max_points:
        raise ValueError(f"{M} points exceed the bound {max_points}")


def enumerate_pairings(M: int, max_points: int = MAX_POINTS) -> list[Pairing]:
    """All ``(M-1)!!`` perfect matchings of ``range(M)``."""
    _check_even(M, max_points)
    return list(_pairings(tuple(range(M))))


def _pairings(free: tuple):
    if not free:
        yield ()
        return
    first = free[0]
    for idx in range(1, len(free)):
        rest = free[1:idx] + free[idx + 1:]
        for tail in _pairings(rest):
            yield ((first, free[idx]),) + tail


def _crosses(p, q) -> bool:
    (a, b), (c, d) = p, q
    return a < c < b < d or c < a < d < b


def is_linked(pairing: Pairing) -> bool:
    """True iff the crossing graph of the arcs is connected."""
    arcs = list(pairing)
    if len(arcs) <= 1:
        return True
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in range(len(arcs)):
            if v not in seen and _crosses(arcs[u], arcs[v]):
                seen.add(v)
                stack.append(v)
    return len(seen) == len(arcs)


def double_factorial(n: int) -> int:
    """``n!!`` with the conventions ``0!! = (-1)!! = 1``."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def pair_index(M: int) -> np.ndarray:
    """Map ``(a, b) -> column`` in the ``np.triu_indices(M, 1)`` ordering."""
    idx = -np.ones((M, M), dtype=np.int64)
    a, b = np.triu_indices(M, 1)
    idx[a, b] = np.arange(a.size)
    return idx


@lru_cache(maxsize=None)
def pairing_table(M: int, linked: bool) -> np.ndarray:
    """Pairings of ``M`` points as rows of upper-triangle column indices.

    Shape ``(P, M/2)``; read-only.  ``linked=True`` keeps only linked
    pairings.
    """
    _check_even(M, MAX_POINTS)
    idx = pair_index(M)
    rows = [[idx[a, b] for a, b in p]
            for p in enumerate_pairings(M)
            if not linked or is_linked(p)]
    table = np.array(rows, dtype=np.int64).reshape(len(rows), M // 2)
    table.setflags(write=False)
    return table


def functional_from_pairs(bpairs: np.ndarray, M: int, linked: bool) -> np.ndarray:
    """Sum over pairings of products of precomputed pair correlations.

    ``bpairs`` has shape ``(n, M(M-1)/2)`` in ``triu_indices`` order.
    """
    n = bpairs.shape[0]
    if M == 0:
        return np.ones(n, dtype=complex)
    table = pairing_table(M, linked)
    P = table.shape[0]
    out = np.empty(n, dtype=complex)
    step = max(1, _WORK // max(P, 1))
    # Real and imaginary parts are multiplied separately and each row is
    # summed strictly left to right (cumsum), so a value never depends on
    # the size of the batch it was computed in.
    for lo in range(0, n, step):
        blk = bpairs[lo:lo + step]
        br, bi = np.ascontiguousarray(blk.real), np.ascontiguousarray(blk.imag)
        pr, pi = br[:, table[:, 0]], bi[:, table[:, 0]]
        for c in range(1, table.shape[1]):
            qr, qi = br[:, table[:, c]], bi[:, table[:, c]]
            pr, pi = pr * qr - pi * qi, pr * qi + pi * qr
        out.real[lo:lo + step] = np.cumsum(pr, axis=1)[:, -1]
        out.imag[lo:lo + step] = np.cumsum(pi, axis=1)[:, -1]
    return out


def _functional(bath: BathCorrelation, times, linked: bool):
    t = np.asarray(times, dtype=float)
    single = t.ndim == 1
    t2 = np.atleast_2d(t)
    M = t2.shape[1]
    if np.any(np.diff(t2, axis=1) < 0.0):
        raise ValueError("times must be sorted ascending")
    if M % 2:
        out = np.zeros(t2.shape[0], dtype=complex)
    else:
        _check_even(M, MAX_POINTS)
        a, b = np.triu_indices(M, 1)
        absval = np.abs(t2)
        bp = b_star(bath, absval[:, a] - absval[:, b])
        out = functional_from_pairs(np.atleast_2d(bp), M, linked)
    return complex(out[0]) if single else out


def lb_full(bath: BathCorrelation, times):
    """Full influence functional: sum over all pairings of ``prod B``.

    ``times`` is a sorted sequence, or a 2-D array with one sequence per
    row.  An odd number of points gives 0.
    """
    return _functional(bath, times, linked=False)


def lb_connected(bath: BathCorrelation, times):
    """Linked influence functional: sum over linked pairings only."""
    return _functional(bath, times, linked=True)
