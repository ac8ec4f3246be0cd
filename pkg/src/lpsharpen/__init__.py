"""Density sharpening of discrete null models with LP-orthonormal polynomials."""

__version__ = "0.1.0"

from .base_measure import (  # noqa: E402
    BaseMeasure,
    EmpiricalCounts,
    NullFamily,
    default_family,
    fit_params,
    from_spec,
    make_empirical,
    make_parametric,
    mid_cdf,
    quantile,
)
from .lp_basis import LPBasis, basis_table, build_basis, eval_s, quantile_inner  # noqa: E402
from .sharpen import (  # noqa: E402
    ConvergenceError,
    LPCoefficients,
    SharpenedModel,
    comparison_density,
    density_curve,
    ds_fourier,
    fit,
    lp_coefficients,
    maxent_fit,
    select,
)
from .inference import (  # noqa: E402
    GofReport,
    bootstrap_se,
    double_bootstrap_test,
    kl_statistic,
    lp_gof,
    parametric_bootstrap_test,
    pearson_chisq,
    proportion_ztest,
    relative_entropy,
)
from .discovery import BumpScanResult, DssResult, bump_scan, dss_embed, lp_transform_matrix  # noqa: E402

__all__ = [
    "BaseMeasure", "EmpiricalCounts", "NullFamily", "default_family", "fit_params", "from_spec",
    "make_empirical", "make_parametric", "mid_cdf", "quantile",
    "LPBasis", "basis_table", "build_basis", "eval_s", "quantile_inner",
    "ConvergenceError", "LPCoefficients", "SharpenedModel", "comparison_density", "density_curve",
    "ds_fourier", "fit", "lp_coefficients", "maxent_fit", "select",
    "GofReport", "bootstrap_se", "double_bootstrap_test", "kl_statistic", "lp_gof",
    "parametric_bootstrap_test", "pearson_chisq", "proportion_ztest", "relative_entropy",
    "BumpScanResult", "DssResult", "bump_scan", "dss_embed", "lp_transform_matrix",
]
