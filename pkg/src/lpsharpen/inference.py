"""Goodness-of-fit tests, relative entropy and bootstrap calibration.

Every test returns a :class:`GofReport`. Bootstrap replicates draw from child
generators spawned from one ``SeedSequence``, so a replicate's sample depends
only on ``(seed, replicate index)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from .base_measure import BaseMeasure, EmpiricalCounts, NullFamily, covering
from .lp_basis import LPBasis, build_basis
from .sharpen import (
    ConvergenceError,
    SharpenedModel,
    lp_coefficients,
    maxent_fit,
    select,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_ORDER = 8


@dataclass
class GofReport:
    method: str
    statistic: float
    df: int | None
    p_value: float
    coefficients: list[tuple[int, float, float]] = field(default_factory=list)
    selection: str | None = None
    active: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "coefficients": [
                {"order": j, "lp": lp, "z": z, "selected": j in self.active} for j, lp, z in self.coefficients
            ],
            "meta": dict(self.meta, selection=self.selection, active=list(self.active), note=self.note),
        }


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail chi-square probability (regularized upper incomplete gamma)."""
    if np.isinf(x):
        return 0.0
    return float(stats.chi2.sf(x, df))


def _child_rngs(seed, count: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def draw_counts(rng: np.random.Generator, pmf: np.ndarray, n: int) -> np.ndarray:
    """Multinomial cell counts of ``n`` draws from ``pmf``."""
    p = np.clip(np.asarray(pmf, dtype=float), 0, None)
    return rng.multinomial(int(n), p / p.sum())


def _counts_to_empirical(bm: BaseMeasure, counts: np.ndarray) -> EmpiricalCounts:
    return EmpiricalCounts(bm.support, counts)


# ---------------------------------------------------------------------------
# classical and LP tests


def pearson_chisq(data: EmpiricalCounts, bm: BaseMeasure) -> GofReport:
    """Pearson ``n sum (p~ - p0)^2 / p0`` over the support of ``bm``; df = r - 1."""
    counts = data.on_support(bm)
    n = data.n
    pt = counts / n
    p0 = bm.pmf
    zero = p0 <= 0
    if np.any(zero & (counts > 0)):
        return GofReport("pearson", float("inf"), bm.r - 1, 0.0,
                         note="positive count in a zero-probability cell")
    stat = float(n * np.sum((pt[~zero] - p0[~zero]) ** 2 / p0[~zero]))
    df = int(np.count_nonzero(~zero) - 1)
    return GofReport("pearson", stat, df, chi2_sf(stat, df))


def lp_gof(
    data: EmpiricalCounts,
    bm: BaseMeasure,
    basis: LPBasis | None = None,
    selection: str | Iterable[int] = "threshold",
    max_order: int | None = None,
) -> GofReport:
    """Compressive chi-square ``n sum_{j in J} LP_j^2`` referred to chi-square with ``|J|`` df.

    ``selection`` is ``"threshold"``, ``"aic"``, ``"full"`` or an explicit
    collection of orders. ``max_order`` defaults to ``r - 1`` (full rank)
    when no basis is passed.
    """
    if basis is None:
        basis = build_basis(bm, max_order if max_order is not None else bm.r - 1)
    coefs = lp_coefficients(basis, data)
    if isinstance(selection, str):
        active = select(coefs, selection)
        sel_name = selection
    else:
        active = tuple(sorted(int(j) for j in selection))
        for j in active:
            basis.column(j)
        sel_name = "fixed"
    table = [(j, float(v), float(z)) for j, v, z in zip(coefs.orders, coefs.values, coefs.z)]
    meta = {"n": data.n, "max_order": basis.M, "dropped": list(basis.dropped)}
    if not active:
        return GofReport("lpgof", 0.0, 0, 1.0, table, sel_name, (), meta, "no evidence of lack-of-fit")
    stat = float(data.n * sum(coefs[j] ** 2 for j in active))
    return GofReport("lpgof", stat, len(active), chi2_sf(stat, len(active)), table, sel_name, active, meta)


def proportion_ztest(successes: int, n: int, p0: float) -> GofReport:
    """One-sample proportion Z-test; ``z = sqrt(n) LP_1`` for the binary null."""
    if not 0 < p0 < 1:
        raise ValueError("p0 must lie strictly between 0 and 1")
    if not 0 <= successes <= n or n < 1:
        raise ValueError("need 0 <= successes <= n and n >= 1")
    bm = BaseMeasure(np.array([0, 1]), np.array([1.0 - p0, p0]), "binomial", {"trials": 1, "prob": p0})
    data = EmpiricalCounts(np.array([0, 1]), np.array([n - successes, successes]))
    lp1 = lp_coefficients(build_basis(bm, 1), data)[1]
    z = float(np.sqrt(n) * lp1)
    p = float(2 * stats.norm.sf(abs(z)))
    return GofReport("proportion_z", z * z, 1, min(p, 1.0), [(1, float(lp1), z)], "fixed", (1,),
                     {"n": n, "z": z, "p0": p0, "identity": "z = sqrt(n) * LP_1"})


# ---------------------------------------------------------------------------
# relative entropy


def relative_entropy(model: SharpenedModel) -> float:
    """``KL(p_hat || p0) = sum_j theta_j LP_j - Psi(theta)`` for a maxent model.

    The LP moments are those the fitted model reproduces, i.e. ``E_theta[T_j]``.
    """
    if model.form != "maxent":
        raise ValueError("relative entropy needs a maxent model (fourier models carry no theta)")
    if not model.active:
        return 0.0
    T = np.column_stack([model.basis.T(j) for j in model.active])
    moments = model.pmf @ T
    return float(model.coef @ moments - model.psi)


def direct_kl(model: SharpenedModel) -> float:
    """``sum p_hat log(p_hat / p0)`` evaluated directly."""
    p, q = model.pmf, model.base.pmf
    pos = p > 0
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def kl_statistic(
    max_order: int | None = None, selection: str | Iterable[int] = "full"
) -> Callable[[EmpiricalCounts, BaseMeasure], float]:
    """Statistic factory: maxent KL of ``data`` against ``bm`` over the selected LP orders.

    ``selection`` is a method name, re-applied to every data set, or a fixed
    collection of orders (the model selected once on the observed data).
    """
    fixed = None if isinstance(selection, str) else tuple(sorted(int(j) for j in selection))

    def statistic(data: EmpiricalCounts, bm: BaseMeasure) -> float:
        m = bm.r - 1 if max_order is None else min(max_order, bm.r - 1)
        basis = build_basis(bm, m)
        coefs = lp_coefficients(basis, data)
        active = select(coefs, selection) if fixed is None else fixed
        try:
            model = maxent_fit(basis, coefs, active)
        except ConvergenceError:
            # full-rank targets with empty cells sit on the boundary of the moment polytope
            if len(active) != bm.r - 1:
                raise
            return _boundary_kl(basis, data)
        return relative_entropy(model)

    return statistic


def _boundary_kl(basis: LPBasis, data: EmpiricalCounts) -> float:
    # full-rank maxent reproduces p~ exactly, so the KL is the plug-in divergence
    pt = data.on_support(basis.base) / data.n
    p0 = basis.base.pmf
    pos = pt > 0
    return float(np.sum(pt[pos] * np.log(pt[pos] / p0[pos])))


def lpgof_statistic(max_order: int | None = None, selection: str | Iterable[int] = "full") -> Callable[[EmpiricalCounts, BaseMeasure], float]:
    """Statistic factory: ``n sum_{j in J} LP_j^2``."""

    def statistic(data: EmpiricalCounts, bm: BaseMeasure) -> float:
        m = bm.r - 1 if max_order is None else min(max_order, bm.r - 1)
        return lp_gof(data, bm, build_basis(bm, m), selection).statistic

    return statistic


# ---------------------------------------------------------------------------
# bootstrap


def bootstrap_se(statistic_fn: Callable[[EmpiricalCounts], float], data: EmpiricalCounts, B: int = 1000, seed=None) -> float:
    """Nonparametric bootstrap standard error (resampling ``n`` draws from ``p~``)."""
    if B < 2:
        raise ValueError("need B >= 2")
    values = np.empty(B)
    for b, rng in enumerate(_child_rngs(seed, B)):
        counts = draw_counts(rng, data.pmf, data.n)
        values[b] = statistic_fn(EmpiricalCounts(data.values, counts))
    return float(np.std(values, ddof=1))


def _null_sample(bm: BaseMeasure, rng, n: int) -> EmpiricalCounts:
    return _counts_to_empirical(bm, draw_counts(rng, bm.pmf, n))


def parametric_bootstrap_test(
    statistic_fn: Callable[[EmpiricalCounts, BaseMeasure], float],
    bm: BaseMeasure,
    data: EmpiricalCounts,
    B: int = 1000,
    seed=None,
    method: str = "parametric_bootstrap",
) -> GofReport:
    """Bootstrap p-value ``(1 + #{T_b >= T_obs}) / (B + 1)`` with samples of size ``n`` drawn from ``bm``."""
    if B < 99:
        raise ValueError("parametric bootstrap needs B >= 99")
    bm = covering(bm, data)
    observed = float(statistic_fn(data, bm))
    boot = np.empty(B)
    for b, rng in enumerate(_child_rngs(seed, B)):
        boot[b] = statistic_fn(_null_sample(bm, rng, data.n), bm)
    exceed = int(np.sum(boot >= observed - 1e-12 * max(1.0, abs(observed))))
    p = (1 + exceed) / (B + 1)
    return GofReport(method, observed, None, p,
                     meta={"B": B, "seed": _seed_repr(seed), "n": data.n,
                           "boot_mean": float(boot.mean()), "boot_sd": float(boot.std(ddof=1))})


def double_bootstrap_test(
    statistic_fn: Callable[[EmpiricalCounts, BaseMeasure], float],
    family: NullFamily,
    data: EmpiricalCounts,
    B_outer: int = 199,
    B_inner: int = 0,
    seed=None,
) -> GofReport:
    """Parametric bootstrap that re-estimates the null on every resample.

    The outer level draws from the fitted null, refits the family on each
    sample and recomputes the statistic against that refit, which accounts for
    the parameters having been estimated. With ``B_inner > 0`` each outer
    sample also gets its own inner bootstrap p-value and the outer p-value is
    calibrated against their distribution. A fixed family degenerates to
    :func:`parametric_bootstrap_test`.
    """
    fitted = family.fit(data)
    if family.is_fixed:
        rep = parametric_bootstrap_test(statistic_fn, fitted, data, B_outer, seed, method="double_bootstrap")
        rep.meta.update(B_inner=0, refit=False)
        return rep
    if B_outer < 99:
        raise ValueError("double bootstrap needs B_outer >= 99")
    observed = float(statistic_fn(data, fitted))
    ss = np.random.SeedSequence(seed)
    outer_ss = ss.spawn(B_outer)
    boot = np.full(B_outer, np.nan)
    inner_p = np.full(B_outer, np.nan)
    skipped = 0
    for b, child in enumerate(outer_ss):
        rng = np.random.default_rng(child)
        try:
            sample = _null_sample(fitted, rng, data.n)
            refit = family.fit(sample)
            boot[b] = statistic_fn(sample, refit)
            if B_inner:
                inner = np.empty(B_inner)
                for c, irng in enumerate(_child_rngs(child.spawn(1)[0], B_inner)):
                    s2 = _null_sample(refit, irng, data.n)
                    inner[c] = statistic_fn(s2, family.fit(s2))
                inner_p[b] = (1 + np.sum(inner >= boot[b])) / (B_inner + 1)
        except (ValueError, ConvergenceError, KeyError, FloatingPointError) as exc:
            log.debug("bootstrap replicate %d skipped: %s", b, exc)
            skipped += 1
            boot[b] = np.nan
    if skipped > 0.05 * B_outer:
        raise RuntimeError(f"{skipped} of {B_outer} bootstrap refits failed (more than 5%)")
    ok = ~np.isnan(boot)
    B_eff = int(ok.sum())
    p_single = (1 + np.sum(boot[ok] >= observed - 1e-12 * max(1.0, abs(observed)))) / (B_eff + 1)
    meta = {"B_outer": B_outer, "B_inner": B_inner, "skipped": skipped, "seed": _seed_repr(seed),
            "refit": True, "fitted_params": dict(fitted.params), "p_single": float(p_single)}
    p = p_single
    if B_inner:
        ip = inner_p[ok & ~np.isnan(inner_p)]
        p = (1 + np.sum(ip <= p_single)) / (ip.size + 1)
    return GofReport("double_bootstrap", observed, None, float(p), meta=meta)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy
    return seed
