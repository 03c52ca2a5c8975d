"""Triangular propagator grid with a doubled node at 0, plus interpolation.

Node labels are integers ``-N..N`` except at the fold, which carries two
labels ``"0-"`` and ``"0+"``.  Storage is a dense ``(2N+2, 2N+2, 2, 2)``
array; entries that are not yet known hold NaN so that any use of a
missing value is detected.

Column layout: ``-N..-1 -> 0..N-1``, ``0- -> N``, ``0+ -> N+1``,
``1..N -> N+2..2N+1``.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Union

import numpy as np

from .spinsys import IDENTITY, SIGMA_Z, mul2

Node = Union[int, str]
ZERO_MINUS = "0-"
ZERO_PLUS = "0+"


class MissingGridValue(LookupError):
    """Raised when an interpolation touches a node that has not been set."""


class PropagatorGrid:
    """Values ``G_{j,k}`` for ``-N <= j <= k <= N`` on a uniform grid of step ``h``."""

    def __init__(self, N: int, h: float, observable: np.ndarray, coupling: np.ndarray = SIGMA_Z):
        if N < 1 or h <= 0.0:
            raise ValueError("grid needs N >= 1 and h > 0")
        self.N = int(N)
        self.h = float(h)
        self.observable = np.array(observable, dtype=complex)
        self.coupling = np.array(coupling, dtype=complex)
        size = 2 * self.N + 2
        self.values = np.full((size, size, 2, 2), np.nan, dtype=complex)
        for d in range(size):
            self.values[d, d] = IDENTITY
        self.values[self.N, self.N + 1] = self.observable

    # -- labels -----------------------------------------------------------
    def index(self, node: Node) -> int:
        if node == ZERO_MINUS:
            return self.N
        if node == ZERO_PLUS:
            return self.N + 1
        if isinstance(node, str) or not -self.N <= node <= self.N or node == 0:
            raise ValueError(f"invalid grid node {node!r}; use '0-' or '0+' at the fold")
        return node + self.N if node < 0 else node + self.N + 1

    def time(self, node: Node) -> float:
        if isinstance(node, str):
            return 0.0
        return node * self.h

    def __getitem__(self, key) -> np.ndarray:
        j, k = key
        return self.values[self.index(j), self.index(k)]

    def __setitem__(self, key, value) -> None:
        j, k = key
        a, b = self.index(j), self.index(k)
        if a > b:
            raise ValueError("grid stores only j <= k")
        self.values[a, b] = value

    def is_set(self, j: Node, k: Node) -> bool:
        return not np.isnan(self[j, k]).any()

    @contextmanager
    def overridden(self, node, value):
        """Temporarily replace the value at ``node = (j, k)``."""
        a, b = self.index(node[0]), self.index(node[1])
        old = self.values[a, b].copy()
        self.values[a, b] = value
        try:
            yield self
        finally:
            self.values[a, b] = old

    # -- cells ------------------------------------------------------------
    def _cell_lo(self, p: np.ndarray) -> np.ndarray:
        # lower corner of cell [t_p, t_{p+1}]; the cell [0, h] starts at 0+
        return p + self.N + (p >= 0)

    def _locate(self, a: np.ndarray, upper: bool):
        """Cell index and fractional position; ``upper`` puts nodes at cell ends."""
        r = a / self.h
        p = (np.ceil(r) - 1) if upper else np.floor(r)
        p = np.clip(p, -self.N, self.N - 1).astype(np.int64)
        x = np.clip(r - p, 0.0, 1.0)
        return p, x

    def _check_range(self, a) -> None:
        lim = self.N * self.h * (1 + 1e-12)
        if np.any(np.abs(a) > lim):
            raise ValueError("time outside the grid range")

    def _pair(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Interpolated ``G_I(a, b)`` for off-grid points ``a <= b``."""
        pa, x = self._locate(a, upper=False)
        pb, y = self._locate(b, upper=True)
        la, lb = self._cell_lo(pa), self._cell_lo(pb)
        ha, hb = la + 1, lb + 1
        V = self.values
        x = x[:, None, None]
        y = y[:, None, None]
        out = ((1 - x) * (1 - y) * V[la, lb] + (1 - x) * y * V[la, hb]
               + x * (1 - y) * V[ha, lb] + x * y * V[ha, hb])
        diag = pa >= pb
        if np.any(diag):
            # lower triangle of a diagonal cell; G = Id on the diagonal
            xd, yd = x[diag], y[diag]
            xd = np.minimum(xd, yd)
            out[diag] = (1 - yd) * IDENTITY + (yd - xd) * V[la[diag], hb[diag]] + xd * IDENTITY
        return out

    def _from_node(self, J: int, b: np.ndarray) -> np.ndarray:
        """``G_I(node J, b)``: linear along the row of ``J``."""
        pb, y = self._locate(b, upper=True)
        lb = self._cell_lo(pb)
        y = y[:, None, None]
        return (1 - y) * self.values[J, lb] + y * self.values[J, lb + 1]

    def _to_node(self, a: np.ndarray, K: int) -> np.ndarray:
        """``G_I(a, node K)``: linear along the column of ``K``."""
        pa, x = self._locate(a, upper=False)
        la = self._cell_lo(pa)
        x = x[:, None, None]
        return (1 - x) * self.values[la, K] + x * self.values[la + 1, K]

    def u_interp_batch(self, s_i: Node, times: np.ndarray, s_f: Node) -> np.ndarray:
        """``G_I(s_m, s_f) W ... W G_I(s_i, s_1)`` for each row of ``times``."""
        times = np.asarray(times, dtype=float)
        n, m = times.shape
        J, K = self.index(s_i), self.index(s_f)
        if J > K:
            raise ValueError("s_i must not exceed s_f")
        if m == 0:
            out = np.broadcast_to(self.values[J, K], (n, 2, 2)).copy()
        else:
            self._check_range(times)
            Wm = self.coupling
            acc = self._from_node(J, times[:, 0])
            for q in range(1, m):
                acc = mul2(self._pair(times[:, q - 1], times[:, q]), mul2(Wm, acc))
            acc = mul2(self._to_node(times[:, -1], K), mul2(Wm, acc))
            out = acc
        if np.isnan(out).any():
            raise MissingGridValue(f"interpolation between {s_i!r} and {s_f!r} needs unset nodes")
        return out


def interpolate_g(grid: PropagatorGrid, a: float, b: float) -> np.ndarray:
    """Piecewise-linear ``G_I(a, b)`` for real times ``a <= b``.

    Exact at nodes.  At the fold, ``a = 0`` reads the ``0+`` side and
    ``b = 0`` the ``0-`` side; cells never straddle 0.
    """
    if a > b:
        raise ValueError("interpolate_g requires a <= b")
    grid._check_range(np.array([a, b]))
    if a == b:
        return IDENTITY.copy()
    out = grid._pair(np.array([float(a)]), np.array([float(b)]))[0]
    if np.isnan(out).any():
        raise MissingGridValue("interpolation needs unset nodes")
    return out
