"""Matplotlib figures written to files next to the tabular CLI output."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sharpen import LPCoefficients, SharpenedModel, density_curve  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders identical
    meta = {"Software": None} if path.suffix.lower() == ".png" else {"Creator": None, "CreationDate": None}
    if path.suffix.lower() == ".svg":
        meta = {"Date": None}
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=meta)
    plt.close(fig)
    return path


def plot_comparison_density(models: Sequence[SharpenedModel], path, labels: Sequence[str] | None = None) -> Path:
    """Step curves ``d(u)`` on the unit interval, one per model."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = labels or [m.form for m in models]
    for m, lab in zip(models, labels):
        u, d = density_curve(m)
        ax.plot(u, d, lw=1.6, label=lab)
    ax.axhline(1.0, color="0.5", lw=0.8, ls="--")
    ax.set_xlim(0, 1)
    ax.set_xlabel("u")
    ax.set_ylabel("d(u)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_pmf_overlay(model: SharpenedModel, observed: np.ndarray, path, extra: SharpenedModel | None = None) -> Path:
    """Empirical probabilities against ``p0`` and the sharpened pmf."""
    x = model.base.support
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.vlines(x, 0, observed, color="k", lw=2, label="empirical")
    ax.plot(x, model.base.pmf, "o-", color="tab:blue", ms=3, label="null p0")
    ax.plot(x, model.pmf, "s-", color="tab:red", ms=3, label=f"DS ({model.form})")
    if extra is not None:
        ax.plot(x, extra.pmf, "^-", color="tab:green", ms=3, label=f"DS ({extra.form})")
    ax.set_xlabel("x")
    ax.set_ylabel("probability")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_coefficients(coefs: LPCoefficients, path, active: Sequence[int] = ()) -> Path:
    """Bars of ``sqrt(n) LP_j`` with the +-2 selection band."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    colors = ["tab:red" if j in active else "0.6" for j in coefs.orders]
    ax.bar(coefs.orders, coefs.z, color=colors)
    for s in (-2, 2):
        ax.axhline(s, color="k", lw=0.8, ls="--")
    ax.set_xlabel("order j")
    ax.set_ylabel("sqrt(n) LP_j")
    ax.set_xticks(coefs.orders)
    return _save(fig, path)


def plot_basis(basis, path, max_curves: int = 4) -> Path:
    """First few ``S_j(u)`` as step functions over the cdf breakpoints."""
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = basis.breakpoints()
    for c, j in enumerate(basis.orders[:max_curves]):
        ax.step(edges, np.r_[basis.values[:, c], basis.values[-1, c]], where="post", label=f"S{j}")
    ax.set_xlim(0, 1)
    ax.set_xlabel("u")
    ax.set_ylabel("S_j(u)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_scan(result, path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(result.grid, result.neglog10, lw=1.2)
    ax.axhline(result.threshold, color="tab:red", ls="--", lw=0.8)
    for lo, hi in result.regions:
        ax.axvspan(lo, hi, color="tab:red", alpha=0.15)
    ax.set_xlabel("x")
    ax.set_ylabel("-log10 p")
    return _save(fig, path)


def plot_dss(result, path, labels: Sequence | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    c = result.coords
    if labels is None:
        ax.scatter(c[:, 0], c[:, 1], s=8)
    else:
        labels = np.asarray(labels)
        for lab in np.unique(labels):
            sel = labels == lab
            ax.scatter(c[sel, 0], c[sel, 1], s=8, label=str(lab))
        ax.legend(frameon=False)
    ax.axhline(0, color="0.7", lw=0.6)
    ax.axvline(0, color="0.7", lw=0.6)
    ax.set_xlabel("lambda_1 u_1")
    ax.set_ylabel("lambda_2 u_2")
    return _save(fig, path)


def plot_power(rows: Sequence[dict], path, key: str = "power", xkey: str = "n") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for meth in sorted({r["method"] for r in rows}):
        sub = sorted((r for r in rows if r["method"] == meth), key=lambda r: r[xkey])
        ax.plot([r[xkey] for r in sub], [r[key] for r in sub], "o-", ms=3, label=meth)
    ax.set_xlabel(xkey)
    ax.set_ylabel(key)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_series(x, y, path, xlabel: str, ylabel: str, hline: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, "o-", ms=3)
    if hline is not None:
        ax.axhline(hline, color="tab:red", ls="--", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _save(fig, path)
