"""LP-Fourier coefficients, coefficient selection and sharpened DS(p0, m) models.

Two model forms are supported:

* ``fourier``: ``p(x) = p0(x) [1 + sum_j LP_j T_j(x)]``
* ``maxent``:  ``p(x) = p0(x) exp{sum_j theta_j T_j(x) - Psi(theta)}``
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.special import logsumexp

from .base_measure import BaseMeasure, EmpiricalCounts
from .lp_basis import LPBasis, _segment

log = logging.getLogger(__name__)

MAX_NEWTON_ITER = 200
GRAD_TOL = 1e-10
THETA_GUARD = 60.0


class ConvergenceError(RuntimeError):
    """Raised when the maxent dual solver cannot reach the target moments."""

    def __init__(self, message: str, grad_norm: float = float("nan")):
        super().__init__(message)
        self.grad_norm = grad_norm


@dataclass(frozen=True, eq=False)
class LPCoefficients:
    orders: tuple[int, ...]
    values: np.ndarray
    n: int

    @property
    def z(self) -> np.ndarray:
        """Standardized coefficients ``sqrt(n) LP_j``."""
        return np.sqrt(self.n) * self.values

    def __getitem__(self, j: int) -> float:
        return float(self.values[self.orders.index(j)])

    def as_dict(self) -> dict[int, float]:
        return {j: float(v) for j, v in zip(self.orders, self.values)}


def lp_coefficients(basis: LPBasis, data: EmpiricalCounts) -> LPCoefficients:
    """Weighted-mean estimator ``LP_j = sum_x p~(x) T_j(x)``."""
    counts = data.on_support(basis.base)
    vals = counts @ basis.values / data.n
    vals.setflags(write=False)
    return LPCoefficients(basis.orders, vals, data.n)


def lp_from_counts(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Batched coefficients for a ``(B, r)`` count matrix against an ``(r, m)`` basis table."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=-1, keepdims=True)
    return (counts @ values) / n


def select(coefs: LPCoefficients, method: str = "threshold") -> tuple[int, ...]:
    """Pick the active orders.

    ``threshold`` keeps ``|LP_j| > 2/sqrt(n)``. ``aic`` sorts the squared
    coefficients in decreasing order and keeps the leading ``m`` that maximize
    ``sum of the first m squares - 2m/n`` (``m = 0`` allowed).
    """
    vals = np.asarray(coefs.values)
    n = coefs.n
    if n < 1:
        raise ValueError("sample size must be positive")
    if method == "threshold":
        keep = np.abs(vals) > 2.0 / np.sqrt(n)
        return tuple(j for j, k in zip(coefs.orders, keep) if k)
    if method == "aic":
        order = np.argsort(-np.abs(vals), kind="stable")
        crit = np.concatenate([[0.0], np.cumsum(vals[order] ** 2) - 2.0 * np.arange(1, vals.size + 1) / n])
        m_best = int(np.argmax(crit))
        return tuple(sorted(coefs.orders[i] for i in order[:m_best]))
    if method == "full":
        return tuple(coefs.orders)
    raise ValueError(f"unknown selection method {method!r}")


def select_batch(lp: np.ndarray, n, method: str = "threshold") -> np.ndarray:
    """Boolean ``(B, m)`` mask of selected columns for a batch of coefficient rows."""
    lp = np.atleast_2d(lp)
    n = np.broadcast_to(np.asarray(n, dtype=float).reshape(-1, 1), (lp.shape[0], 1))
    if method == "threshold":
        return np.abs(lp) > 2.0 / np.sqrt(n)
    if method == "full":
        return np.ones_like(lp, dtype=bool)
    if method == "aic":
        order = np.argsort(-np.abs(lp), axis=1, kind="stable")
        sq = np.take_along_axis(lp**2, order, axis=1)
        crit = np.cumsum(sq, axis=1) - 2.0 * np.arange(1, lp.shape[1] + 1) / n
        crit = np.concatenate([np.zeros((lp.shape[0], 1)), crit], axis=1)
        m_best = np.argmax(crit, axis=1)
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.arange(lp.shape[1])[None, :].repeat(lp.shape[0], 0), axis=1)
        return ranks < m_best[:, None]
    raise ValueError(f"unknown selection method {method!r}")


@dataclass(frozen=True, eq=False)
class SharpenedModel:
    base: BaseMeasure
    basis: LPBasis
    form: str
    active: tuple[int, ...]
    coef: np.ndarray
    psi: float = 0.0
    negative: bool = False
    pmf: np.ndarray = field(init=False, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.form not in ("fourier", "maxent"):
            raise ValueError("form must be 'fourier' or 'maxent'")
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=float))
        object.__setattr__(self, "pmf", self._pmf())

    def _design(self) -> np.ndarray:
        if not self.active:
            return np.zeros((self.base.r, 0))
        return np.column_stack([self.basis.T(j) for j in self.active])

    def log_d(self) -> np.ndarray:
        """``log d`` per support point (maxent only)."""
        return self._design() @ self.coef - self.psi

    def d_values(self) -> np.ndarray:
        """Comparison density ``p/p0`` at each support point."""
        if self.form == "fourier":
            return 1.0 + self._design() @ self.coef
        return np.exp(self.log_d())

    def _pmf(self) -> np.ndarray:
        if not self.active:
            out = self.base.pmf.copy()
        else:
            out = self.base.pmf * self.d_values()
        out.setflags(write=False)
        return out

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.pmf)
        return c

    def coefficients(self) -> dict[int, float]:
        return {j: float(c) for j, c in zip(self.active, self.coef)}

    def density(self, u):
        return comparison_density(self, u)

    def mean(self) -> float:
        return model_mean(self)

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Draw ``n`` values by inverse-cdf sampling on the model's support."""
        if self.negative:
            raise ValueError("refusing to sample from a fourier model with negative mass")
        rng = np.random.default_rng(seed)
        c = self.cdf
        idx = np.searchsorted(c / c[-1], rng.random(int(n)), side="right")
        return self.base.support[np.minimum(idx, self.base.r - 1)]


def ds_fourier(basis: LPBasis, coefs: LPCoefficients | Mapping[int, float], active: Iterable[int] | None = None) -> SharpenedModel:
    """Fourier-form sharpened model over the ``active`` orders (all orders when omitted)."""
    values = coefs.as_dict() if isinstance(coefs, LPCoefficients) else {int(k): float(v) for k, v in coefs.items()}
    active = tuple(sorted(values)) if active is None else tuple(sorted(int(j) for j in active))
    for j in active:
        basis.column(j)
        if j not in values:
            raise ValueError(f"no coefficient for order {j}")
    coef = np.array([values[j] for j in active])
    model = SharpenedModel(basis.base, basis, "fourier", active, coef)
    neg = bool(np.any(model.pmf < 0))
    if neg:
        log.warning("fourier model has negative mass at %d support point(s)", int(np.sum(model.pmf < 0)))
    object.__setattr__(model, "negative", neg)
    return model


def _maxent_state(p0_log, T, theta):
    eta = p0_log + T @ theta
    psi = logsumexp(eta)
    q = np.exp(eta - psi)
    return psi, q


def maxent_fit(
    basis: LPBasis,
    targets: LPCoefficients | Mapping[int, float],
    active: Iterable[int] | None = None,
    max_iter: int = MAX_NEWTON_ITER,
    tol: float = GRAD_TOL,
) -> SharpenedModel:
    """Maximum-entropy sharpened model matching the LP moments of ``active`` orders.

    Minimizes the convex dual ``Psi(theta) - theta . LP`` by damped Newton with
    step halving, starting from ``theta = 0``, until the gradient norm drops
    below ``tol``.
    """
    values = targets.as_dict() if isinstance(targets, LPCoefficients) else {int(k): float(v) for k, v in targets.items()}
    active = tuple(sorted(values)) if active is None else tuple(sorted(int(j) for j in active))
    bm = basis.base
    if not active:
        return SharpenedModel(bm, basis, "maxent", (), np.zeros(0), 0.0, info={"iterations": 0, "grad_norm": 0.0})
    T = np.column_stack([basis.T(j) for j in active])
    b = np.array([values[j] for j in active])
    pos = bm.pmf > 0
    T = T[pos]
    p0_log = np.log(bm.pmf[pos])

    theta = np.zeros(len(active))
    psi, q = _maxent_state(p0_log, T, theta)
    obj = psi - theta @ b
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mom = q @ T
        g = mom - b
        grad_norm = float(np.linalg.norm(g))
        if grad_norm < tol:
            break
        Tc = T - mom
        H = (Tc * q[:, None]).T @ Tc
        try:
            step = np.linalg.solve(H + 1e-14 * np.eye(len(b)), g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            psi_c, q_c = _maxent_state(p0_log, T, cand)
            obj_c = psi_c - cand @ b
            if obj_c <= obj + 1e-4 * t * (-(g @ step)) or t < 1e-10:
                break
            # near the optimum the decrease drops below float resolution of
            # the objective; a shrinking gradient is the better acceptance test
            flat = obj_c <= obj + 1e-12 * (1.0 + abs(obj))
            if flat and np.linalg.norm(q_c @ T - b) < grad_norm:
                break
            t *= 0.5
        theta, psi, q, obj = cand, psi_c, q_c, obj_c
        if np.linalg.norm(theta) > THETA_GUARD:
            raise ConvergenceError(
                f"maxent parameters diverge (|theta|={np.linalg.norm(theta):.3g}); targets look unattainable",
                grad_norm,
            )
    else:
        mom = q @ T
        grad_norm = float(np.linalg.norm(mom - b))
        if grad_norm >= tol:
            raise ConvergenceError(f"maxent solver did not converge in {max_iter} iterations "
                                   f"(dual gradient norm {grad_norm:.3g})", grad_norm)
    return SharpenedModel(bm, basis, "maxent", active, theta, float(psi),
                          info={"iterations": it, "grad_norm": grad_norm})


def lp1_from_mean(basis: LPBasis, mean: float) -> float:
    """First LP moment implied by a mean constraint.

    Exact when ``T_1`` is affine in ``x`` (equally spaced support with a flat
    ``p0``, e.g. a fair die), since then ``E[T_1(X)] = a + b E[X]``.
    """
    bm = basis.base
    x = bm.support.astype(float)
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, basis.T(1), rcond=None)
    if np.max(np.abs(A @ np.array([a, b]) - basis.T(1))) > 1e-10:
        raise ValueError("T_1 is not affine in x for this null, so a mean alone does not fix LP_1")
    if not x.min() < mean < x.max():
        raise ValueError("mean must lie strictly inside the support range")
    return float(a + b * mean)


def comparison_density(model: SharpenedModel, u):
    """``d(u)``: fourier ``1 + sum LP_j S_j(u)``, maxent ``exp(sum theta_j S_j(u) - Psi)``."""
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)):
        raise ValueError("u must lie in (0, 1)")
    d = model.d_values()[_segment(model.base, u_arr)]
    return float(d) if np.ndim(d) == 0 else d


def density_curve(model: SharpenedModel) -> tuple[np.ndarray, np.ndarray]:
    """Step-curve points ``(u, d(u))`` at 0, every cdf breakpoint, and 1.

    Each interior breakpoint appears twice (left and right limits) so the
    curve plots as an exact staircase.
    """
    d = model.d_values()
    edges = np.concatenate([[0.0], model.base.cdf])
    edges[-1] = 1.0
    u = np.repeat(edges, 2)[1:-1]
    vals = np.repeat(d, 2)
    return u, vals


def model_mean(model: SharpenedModel) -> float:
    return float(np.dot(model.base.support, model.pmf))


def fit(basis: LPBasis, data: EmpiricalCounts, form: str = "fourier", method: str = "threshold") -> SharpenedModel:
    """Coefficients, selection and model construction in one call."""
    coefs = lp_coefficients(basis, data)
    active = select(coefs, method)
    if form == "fourier":
        model = ds_fourier(basis, coefs, active)
    elif form == "maxent":
        model = maxent_fit(basis, coefs, active)
    else:
        raise ValueError("form must be 'fourier' or 'maxent'")
    model.info.update(n=data.n, selection=method)
    return model
