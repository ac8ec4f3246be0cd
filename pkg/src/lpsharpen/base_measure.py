"""Null models on an ordered discrete support and the sample containers that go with them.

A :class:`BaseMeasure` carries the reference pmf ``p0`` together with its cdf,
mid-distribution function and quantile. Every other module consumes it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, special, stats

FAMILIES = (
    "poisson",
    "neg_binomial",
    "binomial",
    "discrete_uniform",
    "discretized_exponential",
    "custom",
)

DEFAULT_TAIL_TOL = 1e-10
# extra integer points kept past the largest observation under the "tail" policy
DATA_MARGIN = 5


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BaseMeasure:
    """A finite null pmf on ordered support points ``x_1 < ... < x_r``.

    ``edges`` is only set for binned (physical-axis) measures; it has length
    ``r + 1`` and ``support`` then holds the cell midpoints.
    """

    support: np.ndarray
    pmf: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    edges: np.ndarray | None = None
    cdf: np.ndarray = field(init=False, repr=False)
    mid_cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.support)
        p = np.asarray(self.pmf, dtype=float)
        if x.ndim != 1 or p.shape != x.shape:
            raise ValueError("support and pmf must be one-dimensional arrays of equal length")
        if x.size < 2:
            raise ValueError("a base measure needs at least 2 support points")
        if np.any(np.diff(x) <= 0):
            raise ValueError("support points must be strictly increasing")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("pmf values must be finite and nonnegative")
        total = p.sum()
        if total <= 0:
            raise ValueError("pmf sums to zero")
        p = p / total
        if np.count_nonzero(p) < 2:
            raise ValueError("degenerate pmf: all mass on a single point")
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        object.__setattr__(self, "support", _frozen(x))
        object.__setattr__(self, "pmf", _frozen(p, float))
        object.__setattr__(self, "cdf", _frozen(cdf, float))
        object.__setattr__(self, "mid_cdf", _frozen(cdf - p / 2.0, float))
        if self.edges is not None:
            e = np.asarray(self.edges, dtype=float)
            if e.shape != (x.size + 1,) or np.any(np.diff(e) <= 0):
                raise ValueError("edges must be increasing with len(support) + 1 entries")
            object.__setattr__(self, "edges", _frozen(e))

    @property
    def r(self) -> int:
        return int(self.support.size)

    @property
    def is_integer(self) -> bool:
        return np.issubdtype(self.support.dtype, np.integer)

    def index_of(self, x) -> np.ndarray:
        """Positions of the points ``x`` in the support; raises if any is absent."""
        x = np.atleast_1d(np.asarray(x))
        idx = np.searchsorted(self.support, x)
        idx = np.clip(idx, 0, self.r - 1)
        ok = np.isclose(self.support[idx], x, rtol=1e-12, atol=1e-9)
        # the neighbour to the left may be the closer one for real-valued grids
        left = np.clip(idx - 1, 0, self.r - 1)
        ok_left = np.isclose(self.support[left], x, rtol=1e-12, atol=1e-9)
        idx = np.where(ok, idx, left)
        if not np.all(ok | ok_left):
            bad = x[~(ok | ok_left)]
            raise KeyError(f"value(s) outside the support: {bad[:5].tolist()}")
        return idx

    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf))

    def to_spec(self) -> dict:
        spec = {"family": self.family, "params": dict(self.params)}
        if self.truncation:
            spec["truncation"] = dict(self.truncation)
        return spec


def mid_cdf(bm: BaseMeasure, x) -> float:
    """``F0(x) - p0(x)/2`` at a support point."""
    i = bm.index_of(x)[0]
    return float(bm.mid_cdf[i])


def quantile(bm: BaseMeasure, u):
    """Smallest support point whose cdf is at least ``u`` (``Q0(u)``)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)):
        raise ValueError("quantile level must lie in the open interval (0, 1)")
    # cdf entries are cumulative sums; allow for last-bit rounding when u equals one of them
    idx = np.searchsorted(bm.cdf, u_arr - 1e-13, side="left")
    idx = np.minimum(idx, bm.r - 1)
    out = bm.support[idx]
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class EmpiricalCounts:
    """Observed sample as sorted ``(value, count)`` pairs."""

    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        c = np.asarray(self.counts)
        if v.ndim != 1 or c.shape != v.shape or v.size == 0:
            raise ValueError("values and counts must be non-empty 1-d arrays of equal length")
        if np.any(np.diff(v) <= 0):
            raise ValueError("values must be strictly increasing")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        if not np.allclose(c, np.round(c)):
            raise ValueError("counts must be integers")
        c = np.round(c).astype(np.int64)
        if c.sum() <= 0:
            raise ValueError("at least one count must be positive")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "counts", _frozen(c))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def pmf(self) -> np.ndarray:
        return self.counts / self.n

    def mean(self) -> float:
        return float(np.dot(self.values, self.counts) / self.n)

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot((self.values - m) ** 2, self.counts) / self.n)

    def observed(self) -> np.ndarray:
        """Values with a positive count."""
        return self.values[self.counts > 0]

    def on_support(self, bm: BaseMeasure) -> np.ndarray:
        """Count vector aligned with ``bm.support``; raises ``KeyError`` for foreign values."""
        out = np.zeros(bm.r, dtype=np.int64)
        pos = self.counts > 0
        idx = bm.index_of(self.values[pos])
        np.add.at(out, idx, self.counts[pos])
        return out

    def expand(self) -> np.ndarray:
        """Raw sample (values repeated by their counts)."""
        return np.repeat(self.values, self.counts)


def make_empirical(samples: Iterable | None = None, pairs: Iterable | None = None) -> EmpiricalCounts:
    """Build :class:`EmpiricalCounts` from raw samples or from ``(value, count)`` pairs.

    Duplicate values among ``pairs`` are merged with their counts summed.
    """
    if (samples is None) == (pairs is None):
        raise ValueError("pass exactly one of samples= or pairs=")
    if samples is not None:
        arr = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples)
        if arr.size == 0:
            raise ValueError("empty sample")
        values, counts = np.unique(arr, return_counts=True)
        return EmpiricalCounts(values, counts)
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty input")
    vals = np.asarray([p[0] for p in pairs])
    cnts = np.asarray([p[1] for p in pairs])
    if np.any(cnts < 0):
        raise ValueError("negative count")
    values, inv = np.unique(vals, return_inverse=True)
    counts = np.zeros(values.size, dtype=np.int64)
    np.add.at(counts, inv, np.round(cnts).astype(np.int64))
    return EmpiricalCounts(values, counts)


# ---------------------------------------------------------------------------
# parametric families


def _nb_logpmf(x, mu, phi):
    # pmf ∝ C(x+φ-1, x) (μ/(μ+φ))^x (φ/(μ+φ))^φ
    x = np.asarray(x, dtype=float)
    return (
        special.gammaln(x + phi)
        - special.gammaln(phi)
        - special.gammaln(x + 1)
        + x * np.log(mu / (mu + phi))
        + phi * np.log(phi / (mu + phi))
    )


def _check_params(family: str, params: Mapping) -> dict:
    p = dict(params)
    if family == "poisson":
        lam = float(p.get("lam", p.get("lambda", np.nan)))
        if not lam > 0:
            raise ValueError("poisson needs lam > 0")
        return {"lam": lam}
    if family == "neg_binomial":
        mu, phi = float(p.get("mu", np.nan)), float(p.get("phi", np.nan))
        if not (mu > 0 and phi > 0):
            raise ValueError("neg_binomial needs mu > 0 and phi > 0")
        return {"mu": mu, "phi": phi}
    if family == "binomial":
        trials = p.get("trials")
        prob = float(p.get("prob", p.get("pi", np.nan)))
        if trials is None or int(trials) != trials or int(trials) < 1 or not 0 < prob < 1:
            raise ValueError("binomial needs integer trials >= 1 and 0 < prob < 1")
        return {"trials": int(trials), "prob": prob}
    if family == "discrete_uniform":
        k = p.get("k")
        if k is None or int(k) != k or int(k) < 2:
            raise ValueError("discrete_uniform needs integer k >= 2")
        return {"k": int(k), "start": int(p.get("start", 1))}
    if family == "discretized_exponential":
        rate = float(p.get("rate", np.nan))
        if not rate > 0:
            raise ValueError("discretized_exponential needs rate > 0")
        if "edges" in p:
            edges = np.asarray(p["edges"], dtype=float)
        elif {"lo", "hi", "k"} <= p.keys():
            edges = np.linspace(float(p["lo"]), float(p["hi"]), int(p["k"]) + 1)
        else:
            raise ValueError("discretized_exponential needs bin edges (edges= or lo/hi/k)")
        if edges.ndim != 1 or edges.size < 3 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
            raise ValueError("bin edges must be increasing, nonnegative, and define >= 2 cells")
        out = {"rate": rate}
        if "edges" in p:
            out["edges"] = edges.tolist()
        else:
            out.update(lo=float(p["lo"]), hi=float(p["hi"]), k=int(p["k"]))
        return out
    if family == "custom":
        pmf = np.asarray(p.get("pmf", []), dtype=float)
        if pmf.ndim != 1 or pmf.size < 2 or np.any(pmf < 0):
            raise ValueError("custom pmf must be a nonnegative vector with >= 2 entries")
        if pmf.sum() <= 0:
            raise ValueError("custom pmf sums to zero")
        support = p.get("support")
        support = list(range(1, pmf.size + 1)) if support is None else list(support)
        if len(support) != pmf.size:
            raise ValueError("custom support and pmf lengths differ")
        return {"pmf": pmf.tolist(), "support": support}
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def _integer_upper(family: str, params: dict, tol: float) -> int:
    if family == "poisson":
        return int(stats.poisson.isf(tol, params["lam"])) + 1
    mu, phi = params["mu"], params["phi"]
    return int(stats.nbinom.isf(tol, phi, phi / (mu + phi))) + 1


def make_parametric(
    family: str,
    params: Mapping,
    truncation: Mapping | None = None,
    data: EmpiricalCounts | None = None,
) -> BaseMeasure:
    """Construct a truncated and renormalized parametric null.

    ``truncation`` is a record with a ``policy`` key:

    ``"tail"`` (default)
        Infinite-support families are cut where the cumulative mass reaches
        ``1 - tol`` (``tol`` defaults to 1e-10); with ``data`` the support is
        also extended to ``max(observed) + 5``.
    ``"data_range"``
        Integer support restricted to ``[min(observed), max(observed)]``.
    ``"range"``
        Explicit ``lower``/``upper`` integer bounds.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    params = _check_params(family, params)
    trunc = {"policy": "tail", "tol": DEFAULT_TAIL_TOL}
    trunc.update(dict(truncation or {}))
    policy = trunc["policy"]
    if policy not in ("tail", "data_range", "range"):
        raise ValueError(f"unknown truncation policy {policy!r}")

    if family == "discretized_exponential":
        edges = np.asarray(
            params["edges"] if "edges" in params else np.linspace(params["lo"], params["hi"], params["k"] + 1)
        )
        # cell integrals of rate*exp(-rate*x); survival differences keep precision far in the tail
        sf = np.exp(-params["rate"] * edges)
        pmf = sf[:-1] - sf[1:]
        mids = 0.5 * (edges[:-1] + edges[1:])
        return BaseMeasure(mids, pmf, family, params, {"policy": "window"}, edges=edges)

    if family == "custom":
        support = np.asarray(params["support"])
        pmf = np.asarray(params["pmf"], dtype=float)
        order = np.argsort(support, kind="stable")
        bm = BaseMeasure(support[order], pmf[order], family, params, {"policy": "none"})
        return _restrict(bm, trunc, data)

    if family == "binomial":
        x = np.arange(params["trials"] + 1)
        pmf = stats.binom.pmf(x, params["trials"], params["prob"])
    elif family == "discrete_uniform":
        x = np.arange(params["start"], params["start"] + params["k"])
        pmf = np.full(x.size, 1.0 / x.size)
    else:
        lo = 0
        if policy == "range":
            hi = int(trunc["upper"])
        else:
            hi = _integer_upper(family, params, float(trunc["tol"]))
            if data is not None:
                hi = max(hi, int(np.max(data.observed())) + DATA_MARGIN)
        x = np.arange(lo, hi + 1)
        if family == "poisson":
            pmf = stats.poisson.pmf(x, params["lam"])
        else:
            pmf = np.exp(_nb_logpmf(x, params["mu"], params["phi"]))
        trunc["raw_mass"] = float(pmf.sum())
        if policy == "tail":
            trunc.pop("lower", None)
            trunc["upper"] = int(hi)
    bm = BaseMeasure(x, pmf, family, params, trunc)
    return _restrict(bm, trunc, data)


def _restrict(bm: BaseMeasure, trunc: dict, data: EmpiricalCounts | None) -> BaseMeasure:
    policy = trunc.get("policy")
    if policy == "data_range":
        if data is None:
            raise ValueError("truncation policy 'data_range' needs data")
        obs = data.observed()
        lo, hi = obs.min(), obs.max()
    elif policy == "range":
        lo, hi = trunc.get("lower", bm.support[0]), trunc.get("upper", bm.support[-1])
    else:
        return bm
    keep = (bm.support >= lo) & (bm.support <= hi)
    if keep.sum() < 2:
        raise ValueError("truncation leaves fewer than 2 support points")
    rec = dict(trunc)
    rec.update(lower=bm.support[keep][0].item(), upper=bm.support[keep][-1].item())
    rec["raw_mass"] = float(bm.pmf[keep].sum())
    return BaseMeasure(bm.support[keep], bm.pmf[keep], bm.family, bm.params, rec, edges=None)


def from_spec(spec: Mapping, data: EmpiricalCounts | None = None) -> BaseMeasure:
    """Build a measure from a ``{family, params, truncation}`` record."""
    return make_parametric(spec["family"], spec.get("params", {}), spec.get("truncation"), data=data)


def covering(bm: BaseMeasure, data: EmpiricalCounts) -> BaseMeasure:
    """Return ``bm`` re-truncated so that its support contains every observed value.

    Only integer parametric families can be re-truncated; for anything else a
    ``KeyError`` is raised when the data fall outside the support.
    """
    try:
        data.on_support(bm)
        return bm
    except KeyError:
        if bm.family not in ("poisson", "neg_binomial"):
            raise
    trunc = dict(bm.truncation)
    if trunc.get("policy") == "data_range":
        return make_parametric(bm.family, bm.params, trunc, data=data)
    trunc.update(policy="tail")
    trunc.pop("upper", None)
    trunc.pop("raw_mass", None)
    return make_parametric(bm.family, bm.params, trunc, data=data)


# ---------------------------------------------------------------------------
# parameter estimation for the null


def fit_params(family: str, data: EmpiricalCounts, fixed: Mapping | None = None) -> dict:
    """Estimate null parameters from data.

    Poisson and binomial use the sample mean; the negative binomial keeps
    ``mu`` at the sample mean and maximizes the likelihood over ``phi`` with a
    bounded scalar search on ``log(phi)``.
    """
    fixed = dict(fixed or {})
    xbar = data.mean()
    if family == "poisson":
        return {"lam": xbar}
    if family == "binomial":
        trials = int(fixed.get("trials", np.max(data.values)))
        return {"trials": trials, "prob": min(max(xbar / trials, 1e-12), 1 - 1e-12)}
    if family == "discrete_uniform":
        return {"k": int(fixed.get("k", np.max(data.values))), "start": int(fixed.get("start", 1))}
    if family == "neg_binomial":
        mu = fixed.get("mu", xbar)
        x, c = data.values, data.counts

        def nll(logphi):
            return -np.dot(c, _nb_logpmf(x, mu, np.exp(logphi)))

        res = optimize.minimize_scalar(nll, bounds=(np.log(1e-3), np.log(1e6)), method="bounded",
                                       options={"xatol": 1e-10})
        return {"mu": float(mu), "phi": float(np.exp(res.x))}
    raise ValueError(f"no estimator for family {family!r}")


@dataclass(frozen=True)
class NullFamily:
    """A parametric null whose free parameters are re-estimated from each sample.

    ``estimate`` names the parameters fitted from data; everything in ``fixed``
    is held constant. With nothing to estimate the family is fixed and
    :meth:`fit` always returns the same measure.
    """

    family: str
    fixed: dict = field(default_factory=dict)
    estimate: tuple[str, ...] = ()
    truncation: dict | None = None

    @property
    def is_fixed(self) -> bool:
        return not self.estimate

    def fit(self, data: EmpiricalCounts) -> BaseMeasure:
        params = dict(self.fixed)
        if self.estimate:
            est = fit_params(self.family, data, self.fixed)
            params.update({k: est[k] for k in self.estimate})
        return make_parametric(self.family, params, self.truncation, data=data)


def default_family(family: str, params: Mapping | None = None, truncation: Mapping | None = None) -> NullFamily:
    """Null family with the standard free parameters for ``family``, minus any given in ``params``."""
    free: Sequence[str] = {
        "poisson": ("lam",),
        "binomial": ("prob",),
        "neg_binomial": ("mu", "phi"),
    }.get(family, ())
    params = dict(params or {})
    if family == "poisson" and "lambda" in params:
        params["lam"] = params.pop("lambda")
    estimate = tuple(k for k in free if k not in params)
    return NullFamily(family, params, estimate, dict(truncation) if truncation else None)
