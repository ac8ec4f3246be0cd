"""``lp-sharpen`` command-line interface.

Every subcommand writes a JSON or CSV artifact (chosen by the ``--out``
suffix) that embeds the tool version, seed and a hash of the full argument
set. ``--plot`` renders matplotlib figures next to the artifact.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .base_measure import EmpiricalCounts, NullFamily, default_family, make_parametric
from .discovery import DEFAULT_SCAN_ORDER, bump_scan, dss_embed, lp_transform_matrix
from .inference import (
    DEFAULT_MAX_ORDER,
    GofReport,
    bootstrap_se,
    double_bootstrap_test,
    kl_statistic,
    lp_gof,
    lpgof_statistic,
    parametric_bootstrap_test,
    pearson_chisq,
    relative_entropy,
)
from .io import InputError, emit_report, emit_table, load_json, load_model_spec, parse_counts, write_counts
from .lp_basis import basis_table, build_basis
from .sharpen import ConvergenceError, density_curve, ds_fourier, lp_coefficients, maxent_fit, select
from .sim_bench import PowerStudySpec, card_study, generate_hep, hep_pmf, make_alternative, power_curve

log = logging.getLogger("lpsharpen")

SEED_ENV = "LP_SHARPEN_SEED"
LEVEL = 0.05


class UsageError(Exception):
    """Bad flag combination detected after parsing; maps to exit code 2."""


# ---------------------------------------------------------------------------
# shared helpers


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    # fresh entropy, recorded so the run can be repeated
    return int(np.random.SeedSequence().entropy % (2**63))


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    return cfg


def _fmt_of(path) -> str:
    return "csv" if path is not None and str(path).lower().endswith(".csv") else "json"


def _emit_rows(header, rows, path, config, seed) -> None:
    """Tabular output as CSV, or as ``{header, rows}`` JSON for non-.csv paths."""
    if _fmt_of(path) == "csv":
        emit_table(header, rows, path, config, seed)
    else:
        emit_report({"header": list(header), "rows": [list(r) for r in rows]}, "json", path, config, seed)


def _figure_path(args, kind: str) -> Path:
    out = getattr(args, "out", None)
    if out is None or out == "-":
        base = Path(f"lp_sharpen_{args.command}")
    else:
        p = Path(out)
        base = p.with_name(p.stem)
    return base.with_name(f"{base.name}_{kind}.png")


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            num = float(v)
            out[k] = int(num) if num == int(num) and "." not in v and "e" not in v.lower() else num
        except ValueError:
            out[k] = v
    return out


def _null_spec(args) -> tuple[str, dict, dict | None]:
    if getattr(args, "model", None):
        if getattr(args, "family", None):
            raise UsageError("pass either --model or --family, not both")
        spec = load_model_spec(args.model)
        return spec["family"], dict(spec.get("params") or {}), spec.get("truncation")
    if not getattr(args, "family", None):
        raise UsageError("a null model is required: --model spec.json or --family NAME")
    params = _parse_params(getattr(args, "param", None))
    if getattr(args, "trials", None) is not None:
        params["trials"] = int(args.trials)
    trunc = {"policy": args.truncation} if getattr(args, "truncation", None) else None
    return args.family, params, trunc


def _null(args, data: EmpiricalCounts | None):
    """Null measure with free parameters estimated from ``data``; also returns the family."""
    family, params, trunc = _null_spec(args)
    nf = default_family(family, params, trunc)
    if data is None:
        if not nf.is_fixed:
            raise UsageError(f"parameters {', '.join(nf.estimate)} must be given when no data are supplied")
        return make_parametric(family, params, trunc), nf
    return nf.fit(data), nf


def _data(args) -> EmpiricalCounts:
    return parse_counts(args.data)


def _order(args, bm) -> int:
    m = args.order if args.order is not None else DEFAULT_MAX_ORDER
    return max(1, min(int(m), bm.r - 1))


def _null_record(bm, nf: NullFamily) -> dict:
    return {"family": bm.family, "params": dict(bm.params), "estimated": list(nf.estimate),
            "truncation": bm.truncation, "support": [bm.support[0].item(), bm.support[-1].item()], "r": bm.r}


# ---------------------------------------------------------------------------
# subcommands


def cmd_basis(args) -> int:
    data = parse_counts(args.data) if args.data else None
    bm, _ = _null(args, data)
    basis = build_basis(bm, args.order)
    header, rows = basis_table(basis)
    seed = None
    _emit_rows(header, rows, args.out, _config(args), seed)
    if args.plot:
        from .plotting import plot_basis

        plot_basis(basis, _figure_path(args, "basis"))
    return 0


def _fit_models(args, data, bm):
    basis = build_basis(bm, _order(args, bm))
    coefs = lp_coefficients(basis, data)
    active = select(coefs, args.select)
    return basis, coefs, active


def _model_record(model, bm, nf, coefs, selection) -> dict:
    rec = {
        "form": model.form,
        "null": _null_record(bm, nf),
        "selection": selection,
        "active": list(model.active),
        "coefficients": {str(j): c for j, c in model.coefficients().items()},
        "lp": {str(j): v for j, v in coefs.as_dict().items()},
        "psi": model.psi,
        "negative": model.negative,
        "support": bm.support,
        "pmf": model.pmf,
        "mean": model.mean(),
    }
    if model.form == "maxent":
        rec["kl"] = relative_entropy(model)
        rec["iterations"] = model.info.get("iterations")
    return rec


def cmd_fit(args) -> int:
    data = _data(args)
    bm, nf = _null(args, data)
    basis, coefs, active = _fit_models(args, data, bm)
    model = ds_fourier(basis, coefs, active) if args.form == "fourier" else maxent_fit(basis, coefs, active)
    rec = _model_record(model, bm, nf, coefs, args.select)
    emit_report(rec, _fmt_of(args.out), args.out, _config(args), None)
    if args.curve:
        u, d = density_curve(model)
        emit_table(["u", "d"], zip(u, d), args.curve, _config(args), None)
    if args.plot:
        from .plotting import plot_coefficients, plot_comparison_density, plot_pmf_overlay

        plot_comparison_density([model], _figure_path(args, "density"))
        plot_pmf_overlay(model, data.on_support(bm) / data.n, _figure_path(args, "pmf"))
        plot_coefficients(coefs, _figure_path(args, "coefficients"), active)
    return 0


def cmd_gof(args) -> int:
    data = _data(args)
    bm, nf = _null(args, data)
    seed = _seed(args) if (args.boot or args.double_boot) else None
    if args.method == "pearson":
        rep = pearson_chisq(data, bm)
        stat_fn = lambda d, b: pearson_chisq(d, b).statistic  # noqa: E731
    else:
        m = _order(args, bm) if args.order is not None else bm.r - 1
        rep = lp_gof(data, bm, build_basis(bm, m), args.select)
        stat_fn = lpgof_statistic(m, args.select)
    if args.double_boot:
        boot = double_bootstrap_test(stat_fn, nf, data, args.boot or 199, args.B_inner, seed)
        rep.meta["double_bootstrap"] = {"p_value": boot.p_value, **boot.meta}
    elif args.boot:
        boot = parametric_bootstrap_test(stat_fn, bm, data, args.boot, seed)
        rep.meta["bootstrap"] = {"p_value": boot.p_value, **boot.meta}
    rep.meta["null"] = _null_record(bm, nf)
    emit_report(rep, _fmt_of(args.out), args.out, _config(args), seed)
    if args.plot and rep.coefficients:
        from .plotting import plot_coefficients
        from .sharpen import LPCoefficients

        orders = tuple(j for j, _, _ in rep.coefficients)
        coefs = LPCoefficients(orders, np.array([v for _, v, _ in rep.coefficients]), data.n)
        plot_coefficients(coefs, _figure_path(args, "coefficients"), rep.active)
    return 0


def cmd_entropy(args) -> int:
    data = _data(args)
    bm, nf = _null(args, data)
    basis, coefs, active = _fit_models(args, data, bm)
    model = maxent_fit(basis, coefs, active)
    kl = relative_entropy(model)
    seed = _seed(args) if (args.boot or args.test) else None
    out = {"method": "relative_entropy", "statistic": kl, "df": None, "p_value": None,
           "coefficients": [{"order": j, "theta": t, "lp": coefs[j]} for j, t in zip(model.active, model.coef)],
           "meta": {"psi": model.psi, "selection": args.select, "active": list(active),
                    "max_order": basis.M, "n": data.n, "null": _null_record(bm, nf)}}
    ss = np.random.SeedSequence(seed) if seed is not None else None
    se_seed, test_seed = ss.spawn(2) if ss is not None else (None, None)
    if args.boot:
        # default: refit the orders selected on the observed data; "reselect" repeats the selection
        fn = kl_statistic(basis.M, args.select if args.se_mode == "reselect" else active)
        out["meta"]["bootstrap_se"] = bootstrap_se(lambda d: fn(d, bm), data, args.boot, se_seed)
        out["meta"]["bootstrap_se_mode"] = args.se_mode
    if args.test:
        fn = kl_statistic(basis.M, args.select)
        if args.double_boot:
            rep = double_bootstrap_test(fn, nf, data, args.test, args.B_inner, test_seed)
        else:
            rep = parametric_bootstrap_test(fn, bm, data, args.test, test_seed)
        out["p_value"] = rep.p_value
        out["meta"]["test"] = rep.meta
    emit_report(out, _fmt_of(args.out), args.out, _config(args), seed)
    return 0


def cmd_scan(args) -> int:
    data = _data(args)
    bm, _ = _null(args, data)
    seed = _seed(args)
    approx = None if args.approx_tail is None else args.approx_tail
    res = bump_scan(bm, data, args.B, args.sigma, seed, args.order, tuple(args.window) if args.window else None,
                    approx)
    # neglog10 and in_region follow the Gaussian tail when the output is flagged approximated
    rows = zip(res.grid, res.pval, res.neglog10, res.in_region(), res.pval_tail)
    cfg = dict(_config(args), approximated=res.approximated, threshold=res.threshold,
               regions=[list(r) for r in res.regions])
    _emit_rows(["x", "pval", "neglog10", "in_region", "pval_gauss"], rows, args.out, cfg, seed)
    for lo, hi in res.regions:
        print(f"region {lo:.6g} {hi:.6g}", file=sys.stderr)
    if args.plot:
        from .plotting import plot_scan

        plot_scan(res, _figure_path(args, "scan"))
    return 0


def cmd_dss(args) -> int:
    src_dir = Path(args.sources)
    if not src_dir.is_dir():
        raise InputError("--sources must be a directory of counts files", path=str(src_dir))
    files = sorted(p for p in src_dir.iterdir() if p.suffix in (".csv", ".txt"))
    if len(files) < 2:
        raise InputError("DSS needs at least 2 source files", path=str(src_dir))
    sources = [parse_counts(p) for p in files]
    family, params, trunc = _null_spec(args)
    nf = default_family(family, params, trunc)
    if not nf.is_fixed:
        raise UsageError("dss needs a fully specified null shared by all sources")
    bm = make_parametric(family, params, trunc)
    L = lp_transform_matrix(sources, bm, args.m)
    res = dss_embed(L)
    rows = [[p.name, c[0], c[1], di] for p, c, di in zip(files, res.coords, res.discovery_index)]
    _emit_rows(["source", "coord1", "coord2", "discovery_index"], rows, args.out, _config(args), None)
    if args.plot:
        from .plotting import plot_dss

        plot_dss(res, _figure_path(args, "dss"))
    return 0


def _power_spec_from_config(cfg: dict, seed: int) -> PowerStudySpec:
    k = int(cfg.get("k", 500))
    null = cfg.get("null", "uniform")
    if null == "uniform":
        p0 = np.full(k, 1.0 / k)
    elif null == "hep":
        p0 = hep_pmf(k)[0].pmf
    else:
        raise InputError(f"unknown null {null!r}; expected 'uniform' or 'hep'")
    alt = cfg.get("alternative", {"kind": "null"})
    kind = alt.get("kind", "null")
    params = dict(alt.get("params", {}))
    if kind == "null":
        p1 = p0
    elif kind == "hep_bump":
        bump = tuple(params.get("bump", (125.0, 2.0, 0.1)))
        p1 = hep_pmf(k, bump)[1]
    else:
        p1 = make_alternative(kind, k, **params)
    return PowerStudySpec(
        p0, p1, [int(n) for n in cfg.get("n_grid", [100, 200, 500])],
        B_null=int(cfg.get("B_null", 350)), B_alt=int(cfg.get("B_alt", 350)),
        level=float(cfg.get("level", LEVEL)), methods=tuple(cfg.get("methods", ("lpgof", "pearson"))),
        m=int(cfg.get("m", 8)), seed=seed, name=str(cfg.get("name", "")),
    )


def cmd_simulate(args) -> int:
    cfg = load_json(args.config) if args.config else {}
    seed = _seed(args)
    config = dict(_config(args), study=cfg)
    if args.kind == "card":
        rows = card_study(cfg.get("k_list", [150, 160, 170, 180, 190, 200]), int(cfg.get("n", 500)),
                          int(cfg.get("B", 250)), seed, tuple(cfg.get("orders", (1,))),
                          int(cfg.get("deck_size", 52)), bool(cfg.get("distinct", False)))
        header = list(rows[0])
        _emit_rows(header, [[r[h] for h in header] for r in rows], args.out, config, seed)
        if args.plot:
            from .plotting import plot_series

            plot_series([r["k"] for r in rows], [r["mean_p"] for r in rows], _figure_path(args, "card"),
                        "shuffles k", "mean p-value", hline=LEVEL)
    elif args.kind == "hep":
        bump = cfg.get("bump", [125.0, 2.0, 0.1])
        data = generate_hep(int(cfg.get("k", 250)), int(cfg.get("n", 10_000)),
                            tuple(bump) if bump else None, tuple(cfg.get("window", (100.0, 250.0))), seed,
                            float(cfg.get("rate", 1.0 / 20.0)))
        write_counts(data, args.out)
    else:
        spec = _power_spec_from_config(cfg, seed)
        rows = power_curve(spec)
        _emit_rows(["n", "method", "power", "critical"], [[r["n"], r["method"], r["power"], r["critical"]]
                                                          for r in rows], args.out, config, seed)
        if args.plot:
            from .plotting import plot_power

            plot_power(rows, _figure_path(args, "power"))
    return 0


def cmd_pipeline(args) -> int:
    """basis -> coefficients -> selection -> fourier and maxent fits -> LPgof -> KL -> report."""
    data = _data(args)
    bm, nf = _null(args, data)
    basis, coefs, active = _fit_models(args, data, bm)
    fourier = ds_fourier(basis, coefs, active)
    try:
        maxent = maxent_fit(basis, coefs, active)
        maxent_rec = {"theta": {str(j): t for j, t in zip(maxent.active, maxent.coef)}, "psi": maxent.psi,
                      "kl": relative_entropy(maxent), "pmf": maxent.pmf}
    except ConvergenceError as exc:
        maxent, maxent_rec = None, {"error": str(exc)}
    gof = lp_gof(data, bm, basis, list(active))
    gof.selection = args.select
    accepted = gof.p_value >= LEVEL
    rep = GofReport(
        "pipeline", gof.statistic, gof.df, gof.p_value, gof.coefficients, args.select, active,
        {
            "n": data.n,
            "null": _null_record(bm, nf),
            "max_order": basis.M,
            "dropped": list(basis.dropped),
            "decision": "model accepted" if accepted else "model rejected",
            "fourier": {"lp": {str(j): c for j, c in fourier.coefficients().items()},
                        "negative": fourier.negative, "pmf": fourier.pmf},
            "maxent": maxent_rec,
            "pearson": {k: v for k, v in pearson_chisq(data, bm).to_dict().items() if k in ("statistic", "df", "p_value")},
        },
        gof.note,
    )
    emit_report(rep, _fmt_of(args.out), args.out, _config(args), None)
    print(f"{rep.meta['decision']}: statistic={rep.statistic:.6g} df={rep.df} p={rep.p_value:.4g} "
          f"active={list(active)}", file=sys.stderr)
    if args.plot:
        from .plotting import plot_coefficients, plot_comparison_density, plot_pmf_overlay

        models = [fourier] + ([maxent] if maxent is not None else [])
        plot_comparison_density(models, _figure_path(args, "density"))
        plot_pmf_overlay(fourier, data.on_support(bm) / data.n, _figure_path(args, "pmf"), maxent)
        plot_coefficients(coefs, _figure_path(args, "coefficients"), active)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_null(p, with_data=True):
    g = p.add_argument_group("null model")
    g.add_argument("--model", help="JSON model spec {family, params, truncation}")
    g.add_argument("--family", choices=["poisson", "neg_binomial", "binomial", "discrete_uniform",
                                        "discretized_exponential"], help="parametric null family")
    g.add_argument("--trials", type=int, help="binomial number of trials")
    g.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="fixed null parameter (repeatable); missing ones are estimated from the data")
    g.add_argument("--truncation", choices=["tail", "data_range"], help="support truncation policy")
    if with_data:
        p.add_argument("--data", required=True, help="counts CSV (value,count) or one value per line")


def _add_select(p, default="threshold"):
    p.add_argument("--select", choices=["threshold", "aic", "full"], default=default)
    p.add_argument("--order", type=int, default=None, help=f"largest LP order (default {DEFAULT_MAX_ORDER})")


def _add_out(p):
    p.add_argument("--out", default="-", help="output path; .csv selects CSV, anything else JSON; '-' is stdout")
    p.add_argument("--plot", action="store_true", help="also render figures next to --out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lp-sharpen", description="Density sharpening of discrete null models.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", help="tabulate LP basis functions")
    _add_null(p, with_data=False)
    p.add_argument("--data", help="optional counts used to estimate free parameters and cover the support")
    p.add_argument("--order", type=int, required=True)
    _add_out(p)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("fit", help="fit a sharpened model")
    _add_null(p)
    _add_select(p)
    p.add_argument("--form", choices=["maxent", "fourier"], default="maxent")
    p.add_argument("--curve", help="write (u, d(u)) staircase points to this CSV")
    _add_out(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gof", help="goodness-of-fit test")
    _add_null(p)
    _add_select(p)
    p.add_argument("--method", choices=["lpgof", "pearson"], default="lpgof")
    p.add_argument("--boot", type=int, default=0, help="parametric bootstrap replicates")
    p.add_argument("--double-boot", action="store_true", help="re-estimate the null on each replicate")
    p.add_argument("--B-inner", type=int, default=0, dest="B_inner")
    p.add_argument("--seed", type=int)
    _add_out(p)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("entropy", help="relative entropy of the maxent model")
    _add_null(p)
    _add_select(p)
    p.add_argument("--boot", type=int, default=0, help="nonparametric bootstrap replicates for the SE")
    p.add_argument("--se-mode", choices=["selected", "reselect"], default="selected",
                   help="bootstrap SE refits the selected orders or repeats the selection per resample")
    p.add_argument("--test", type=int, default=0, help="parametric bootstrap replicates for H0: KL = 0")
    p.add_argument("--double-boot", action="store_true")
    p.add_argument("--B-inner", type=int, default=0, dest="B_inner")
    p.add_argument("--seed", type=int)
    _add_out(p)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("scan", help="bootstrap bump scan")
    _add_null(p)
    p.add_argument("--B", type=int, default=10_000)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--order", type=int, default=DEFAULT_SCAN_ORDER)
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--approx-tail", dest="approx_tail", action="store_true", default=None,
                   help="always use the Gaussian tail on the studentized statistic")
    g.add_argument("--no-approx-tail", dest="approx_tail", action="store_false",
                   help="fail when B is too small for the requested sigma level")
    p.add_argument("--seed", type=int)
    _add_out(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("dss", help="discovery-source separation")
    _add_null(p, with_data=False)
    p.add_argument("--sources", required=True, help="directory of counts files, one per source")
    p.add_argument("--m", type=int, default=10)
    _add_out(p)
    p.set_defaults(func=cmd_dss)

    p = sub.add_parser("simulate", help="simulation studies")
    p.add_argument("kind", choices=["card", "hep", "power"])
    p.add_argument("--config", help="study JSON")
    p.add_argument("--seed", type=int)
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="end-to-end analysis")
    _add_null(p)
    _add_select(p, default="aic")
    _add_out(p)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"lp-sharpen {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (InputError, ValueError, KeyError, RuntimeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"lp-sharpen {args.command}: error: {msg}", file=sys.stderr)
        return 1


def run(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
