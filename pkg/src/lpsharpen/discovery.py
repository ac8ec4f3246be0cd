"""Bump scans over the comparison density and discovery-source separation.

The bump scan compares the estimated comparison density of the observed
data with a bundle of parametric-bootstrap null curves, point by point. DSS
embeds many empirical distributions through the SVD of their LP-transform
matrix.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .base_measure import BaseMeasure, EmpiricalCounts
from .lp_basis import build_basis
from .sharpen import lp_from_counts, select_batch

log = logging.getLogger(__name__)

DEFAULT_SCAN_ORDER = 10


@dataclass
class BumpScanResult:
    grid: np.ndarray
    pval: np.ndarray
    neglog10: np.ndarray
    regions: list[tuple[float, float]]
    threshold: float
    d_obs: np.ndarray = field(repr=False, default=None)
    pval_tail: np.ndarray | None = field(repr=False, default=None)
    approximated: bool = False
    meta: dict = field(default_factory=dict)

    def in_region(self) -> np.ndarray:
        return self.neglog10 >= self.threshold


def _fourier_curves(T: np.ndarray, counts: np.ndarray, method: str) -> np.ndarray:
    lp = lp_from_counts(T, counts)
    mask = select_batch(lp, counts.sum(axis=-1), method)
    return 1.0 + (lp * mask) @ T.T


def bump_scan(
    bm: BaseMeasure,
    data: EmpiricalCounts,
    B: int = 10_000,
    sigma_level: float = 5.0,
    seed=None,
    max_order: int = DEFAULT_SCAN_ORDER,
    window: tuple[float, float] | None = None,
    approx_tail: bool | None = None,
    selection: str = "threshold",
) -> BumpScanResult:
    """Pointwise parametric-bootstrap scan of the threshold-selected Fourier ``d_hat``.

    For each grid point the p-value is ``(1 + #{d_b >= d_obs}) / (B + 1)``.
    When ``1/(B+1)`` cannot reach the one-sided normal tail of
    ``sigma_level``, the p-value used for the regions comes from a Gaussian
    tail on the studentized statistic ``(d_obs - mean_b) / sd_b``; pass
    ``approx_tail=False`` to turn that into an error instead.
    """
    if B < 1:
        raise ValueError("need B >= 1")
    target = float(stats.norm.sf(sigma_level))
    threshold = -np.log10(target)
    too_small = 1.0 / (B + 1) > target
    if too_small:
        if approx_tail is False:
            raise ValueError(
                f"B={B} cannot resolve a {sigma_level} sigma tail (needs B > {1 / target - 1:.3g}); "
                "enable the Gaussian tail approximation"
            )
        warnings.warn(f"B={B} is too small for {sigma_level} sigma; using a Gaussian tail approximation",
                      stacklevel=2)
    use_tail = bool(approx_tail) or too_small

    basis = build_basis(bm, min(max_order, bm.r - 1))
    T = basis.values
    obs_counts = data.on_support(bm)
    d_obs = _fourier_curves(T, obs_counts[None, :], selection)[0]

    n = data.n
    ss = np.random.SeedSequence(seed)
    null = np.empty((B, bm.r))
    chunk = 1000
    children = ss.spawn(B)
    p = bm.pmf / bm.pmf.sum()
    for start in range(0, B, chunk):
        block = children[start:start + chunk]
        counts = np.stack([np.random.default_rng(c).multinomial(n, p) for c in block])
        null[start:start + len(block)] = _fourier_curves(T, counts, selection)

    tol = 1e-12
    exceed = np.sum(null >= d_obs[None, :] - tol, axis=0)
    pval = (1.0 + exceed) / (B + 1.0)
    mu = null.mean(axis=0)
    sd = null.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        zscore = np.where(sd > 0, (d_obs - mu) / sd, 0.0)
    pval_tail = stats.norm.sf(zscore)
    used = np.clip(pval_tail, 1e-300, 1.0) if use_tail else pval
    neglog10 = -np.log10(used)

    grid = bm.support.astype(float)
    keep = np.ones(bm.r, dtype=bool)
    if window is not None:
        keep = (grid >= window[0]) & (grid <= window[1])
    flagged = (neglog10 >= threshold) & keep
    regions = _runs(flagged, bm)
    meta = {"B": B, "seed": seed if not isinstance(seed, np.random.SeedSequence) else seed.entropy,
            "sigma_level": sigma_level, "max_order": basis.M, "selection": selection,
            "target_p": target, "approx_tail": use_tail}
    res = BumpScanResult(grid[keep], pval[keep], neglog10[keep], regions, float(threshold),
                         d_obs[keep], pval_tail[keep], use_tail, meta)
    return res


def _runs(flag: np.ndarray, bm: BaseMeasure) -> list[tuple[float, float]]:
    out = []
    i = 0
    r = flag.size
    while i < r:
        if flag[i]:
            j = i
            while j + 1 < r and flag[j + 1]:
                j += 1
            if bm.edges is not None:
                out.append((float(bm.edges[i]), float(bm.edges[j + 1])))
            else:
                out.append((float(bm.support[i]), float(bm.support[j])))
            i = j + 1
        else:
            i += 1
    return out


# ---------------------------------------------------------------------------
# discovery-source separation


@dataclass
class DssResult:
    L: np.ndarray = field(repr=False)
    singular_values: np.ndarray
    coords: np.ndarray = field(repr=False)
    discovery_index: np.ndarray = field(repr=False)
    right_vectors: np.ndarray = field(repr=False, default=None)


def lp_transform_matrix(sources: Sequence[EmpiricalCounts], bm: BaseMeasure, m: int = 10) -> np.ndarray:
    """``L[l, j] = LP[j; p0, p~_l]`` for ``j = 1..m``."""
    basis = build_basis(bm, m)
    if basis.m < m:
        raise ValueError(f"only {basis.m} LP orders are available for this measure (asked for {m})")
    counts = np.stack([s.on_support(bm) for s in sources])
    return lp_from_counts(basis.values, counts)


def dss_embed(L: np.ndarray) -> DssResult:
    """Rows of ``L`` mapped to ``(lambda_1 u_1l, lambda_2 u_2l)`` from the thin SVD ``L = U diag(lambda) V^T``."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] < 2 or L.shape[1] < 2:
        raise ValueError("DSS needs at least 2 sources and 2 LP orders")
    U, s, Vt = np.linalg.svd(L, full_matrices=False)
    # fix the sign ambiguity: largest-magnitude loading of each right vector is positive
    flip = np.sign(Vt[np.arange(Vt.shape[0]), np.argmax(np.abs(Vt), axis=1)])
    flip[flip == 0] = 1.0
    U, Vt = U * flip, Vt * flip[:, None]
    coords = U[:, :2] * s[:2]
    index = np.sum(coords**2, axis=1)
    return DssResult(L, s, coords, index, Vt.T)
