"""LP-orthonormal polynomials of the mid-distribution transform.

For a null pmf ``p0`` the first function is the standardized mid-distribution
transform; higher orders come from weighted Gram-Schmidt on its powers, so
every basis function depends on ``x`` only through ``F0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base_measure import BaseMeasure, quantile

DEGENERACY_TOL = 1e-8


def t1(bm: BaseMeasure) -> np.ndarray:
    """First-order LP function ``sqrt(12) (Fmid - 1/2) / sqrt(1 - sum p0^3)``."""
    p = bm.pmf
    denom = 1.0 - np.sum(p**3)
    if denom <= 0:
        raise ValueError("degenerate pmf: a single atom carries all the mass")
    return np.sqrt(12.0) * (bm.mid_cdf - 0.5) / np.sqrt(denom)


@dataclass(frozen=True, eq=False)
class LPBasis:
    """Table of ``T_j(x_i; F0)``; column ``c`` holds order ``orders[c]``."""

    base: BaseMeasure
    M: int
    orders: tuple[int, ...]
    values: np.ndarray = field(repr=False)
    dropped: tuple[int, ...] = ()

    @property
    def m(self) -> int:
        return len(self.orders)

    def column(self, j: int) -> int:
        try:
            return self.orders.index(j)
        except ValueError:
            if j in self.dropped:
                raise ValueError(f"order {j} was dropped as numerically degenerate") from None
            raise ValueError(f"order {j} is not part of this basis (M={self.M})") from None

    def T(self, j: int) -> np.ndarray:
        return self.values[:, self.column(j)]

    def gram(self) -> np.ndarray:
        V = self.values
        return (V * self.base.pmf[:, None]).T @ V

    def breakpoints(self) -> np.ndarray:
        """Segment edges of the unit-interval view: ``0, F0(x_1), ..., F0(x_r) = 1``."""
        return np.concatenate([[0.0], self.base.cdf])


def build_basis(bm: BaseMeasure, M: int) -> LPBasis:
    """Orthonormal LP system of orders ``1..M`` under the ``p0``-weighted inner product.

    Each new direction is ``T1`` times the previous basis function, which spans
    the same nested polynomial spaces as the raw powers ``T1^j`` but is far
    better conditioned. Every candidate is recentered and orthogonalized twice
    against the earlier functions; if its residual norm falls below
    ``1e-8`` times its initial norm the order is dropped and recorded.
    """
    M = int(M)
    if M < 1:
        raise ValueError("order M must be at least 1")
    p = bm.pmf
    first = t1(bm)
    cols: list[np.ndarray] = []
    orders: list[int] = []
    dropped: list[int] = []
    prev = np.ones(bm.r)
    for j in range(1, M + 1):
        if j >= bm.r or (dropped and dropped[-1] == j - 1):
            # nothing beyond r-1 survives, and once a power is degenerate all later ones are
            dropped.append(j)
            continue
        v = first.copy() if j == 1 else first * prev
        norm0 = np.sqrt(np.dot(p, v * v))
        for _ in range(2):
            v = v - np.dot(p, v)
            for u in cols:
                v = v - np.dot(p, v * u) * u
        norm = np.sqrt(np.dot(p, v * v))
        if norm0 == 0 or norm < DEGENERACY_TOL * norm0:
            dropped.append(j)
            continue
        v = v / norm
        cols.append(v)
        orders.append(j)
        prev = v
    values = np.column_stack(cols) if cols else np.zeros((bm.r, 0))
    values.setflags(write=False)
    return LPBasis(bm, M, tuple(orders), values, tuple(dropped))


def eval_s(basis: LPBasis, j: int, u) -> np.ndarray | float:
    """Unit-interval view ``S_j(u) = T_j(Q0(u))``; right-continuous in ``u``."""
    col = basis.T(j)
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)):
        raise ValueError("u must lie in (0, 1)")
    idx = _segment(basis.base, u_arr)
    out = col[idx]
    return float(out) if np.ndim(out) == 0 else out


def _segment(bm: BaseMeasure, u: np.ndarray) -> np.ndarray:
    # right-continuous: u exactly at F0(x_i) already belongs to x_{i+1}
    return np.minimum(np.searchsorted(bm.cdf, u, side="right"), bm.r - 1)


def quantile_inner(basis: LPBasis, j: int = 1) -> float:
    """``<Q0, S_j>`` on the unit interval, i.e. ``sum_x x T_j(x) p0(x)``.

    Both factors are constant on the same cdf segments, so the finite sum is
    the exact integral.
    """
    bm = basis.base
    return float(np.dot(bm.support * bm.pmf, basis.T(j)))


def basis_table(basis: LPBasis) -> tuple[list[str], list[list]]:
    """Rows ``x, pmf, cdf, T_1..T_m`` for CSV export."""
    bm = basis.base
    header = ["x", "pmf", "cdf"] + [f"T{j}" for j in basis.orders]
    rows = []
    for i in range(bm.r):
        rows.append([bm.support[i].item(), bm.pmf[i], bm.cdf[i]] + list(basis.values[i]))
    return header, rows


__all__ = ["LPBasis", "t1", "build_basis", "eval_s", "quantile_inner", "basis_table", "quantile"]
