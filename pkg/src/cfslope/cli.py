"""Command-line front end: analyze CSVs, run simulations, emit plot-line data.

All outputs are plain CSV with a header row; floats are written with repr so a
rerun with the same seed produces byte-identical files. run.log echoes the
full configuration, the seed, dropped-row counts, and fit diagnostics; it
never includes timestamps, again for reproducibility.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .data import Dataset, FilterSpec, VariableRoles, load_dataset
from .eif import SlopeEstimate
from .errors import CfslopeError, ConfigurationError
from .glm import fit_ols
from .inference import AnalysisResult, run_ge, run_st
from .nuisance import ModelSpec
from .simulation import (
    DGP_KINDS,
    ExperimentSpec,
    make_dgp,
    oracle_truth,
    run_experiment,
)

STAR_NOTE = "stars: * p<0.05, ** p<0.01, *** p<0.001"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _stars(p: float) -> str:
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""


# ---------------------------------------------------------------------------
# analyze


def _build_spec(args) -> ModelSpec:
    return ModelSpec(backend=args.backend,
                     include_g_squared=not args.no_g_squared)


def _load(args) -> Dataset:
    roles = VariableRoles(
        outcome_col=args.y, transition_col=args.d, background_col=args.g,
        prior_transition_col=args.p,
        covariate_cols=[c for c in args.x.split(",") if c] if args.x else [],
    )
    filt = None
    if args.trim_col is not None:
        filt = FilterSpec(trim_col=args.trim_col, trim_min=args.trim_min)
    return load_dataset(args.input, roles, filt)


def _run_analysis(data: Dataset, args) -> AnalysisResult:
    spec = _build_spec(args)
    cross = args.cross_fit or args.backend == "neural"
    if args.analysis == "ge":
        return run_ge(data, spec, seed=args.seed, use_cross_fit=cross)
    return run_st(data, spec, formulation=args.st_formulation, seed=args.seed,
                  use_cross_fit=cross)


def _estimate_rows(result: AnalysisResult) -> list:
    rows = []
    for key, s in result.slopes.items():
        rows.append([key, "" if s.target_d is None else s.target_d, s.population,
                     s.point, s.se, s.ci_low, s.ci_high, s.p_value, s.n])
    return rows


def _test_rows(result: AnalysisResult) -> list:
    rows = []
    for t in (result.descriptive, result.selection_free):
        rows.append([t.name, t.point, t.se, t.ci_low, t.ci_high, t.p_value,
                     _stars(t.p_value), t.n])
    return rows


def _config_echo(args, keys) -> list:
    lines = []
    for k in keys:
        lines.append(f"config {k} = {getattr(args, k)}")
    return lines


def _diag_lines(result: AnalysisResult) -> list:
    lines = []
    for key, s in sorted(result.slopes.items()):
        for dk, dv in sorted(s.diagnostics.items()):
            lines.append(f"diagnostic {key} {dk} = {dv}")
    return lines


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = "load"
    try:
        data = _load(args)
        stage = "estimate"
        result = _run_analysis(data, args)
        stage = "write"
        _write_csv(out / "estimates.csv",
                   ["estimand", "target_d", "population", "point", "se",
                    "ci_low", "ci_high", "p_value", "n"],
                   _estimate_rows(result))
        _write_csv(out / "tests.csv",
                   ["name", "point", "se", "ci_low", "ci_high", "p_value", "stars", "n"],
                   _test_rows(result))
        log = [STAR_NOTE]
        log += _config_echo(args, ["input", "y", "d", "g", "p", "x", "analysis",
                                   "st_formulation", "backend", "cross_fit",
                                   "trim_col", "trim_min", "seed", "out"])
        log.append(f"rows analyzed = {data.n}")
        for k, v in sorted(data.load_report.items()):
            log.append(f"load {k} = {v}")
        log += _diag_lines(result)
        (out / "run.log").write_text("\n".join(log) + "\n", encoding="utf-8")
        return 0
    except CfslopeError as exc:
        print(f"error in stage {stage}: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# plot-data


def _line(values: np.ndarray, g: np.ndarray, grid: np.ndarray) -> np.ndarray:
    X = np.column_stack([np.ones_like(g), g])
    beta, _ = fit_ols(X, values, column_names=["const", "g"])
    return beta[0] + beta[1] * grid


def cmd_plot_data(args) -> int:
    from .eif import stabilized_pseudo_outcomes
    from .nuisance import fit_outcome, fit_propensity, fit_tau
    from scipy.special import logit as _lg

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = "load"
    try:
        data = _load(args)
        stage = "estimate"
        spec = _build_spec(args)
        g = data.g
        grid = np.linspace(g.min(), g.max(), args.grid)
        rows = []

        def add(series, vals):
            line = _line(vals, g, grid)
            for gv, v in zip(grid, line):
                rows.append([series, gv, v])

        if args.analysis == "ge":
            for d in (0, 1):
                e_fit = fit_propensity(data, "g_only", spec, seed=args.seed)
                m_fit = fit_outcome(data, d, "g_only", spec, seed=args.seed)
                rho_g = stabilized_pseudo_outcomes(data, e_fit.predictions,
                                                   m_fit.predictions, d, "g_only")
                add(f"Y|G,D={d}", rho_g.values)
                p_fit = fit_propensity(data, "full_x", spec, seed=args.seed)
                o_fit = fit_outcome(data, d, "full_x", spec, seed=args.seed)
                rho_x = stabilized_pseudo_outcomes(data, p_fit.predictions,
                                                   o_fit.predictions, d)
                add(f"Y{d}|G", rho_x.values)
        else:
            e_fit = fit_propensity(data, "g_only", spec, seed=args.seed)
            e = e_fit.predictions
            add("D|G", (data.d - e) / (e * (1 - e)) + _lg(e))
            eg = fit_propensity(data, "g_only", spec, seed=args.seed)
            m_fit = fit_outcome(data, 1, "g_only", spec, seed=args.seed)
            rho_g = stabilized_pseudo_outcomes(data, eg.predictions,
                                               m_fit.predictions, 1, "g_only")
            m = m_fit.predictions
            add("Y|G,D=1", (rho_g.values - m) / (m * (1 - m)) + _lg(m))
            p_fit = fit_propensity(data, "full_x", spec, seed=args.seed)
            o_fit = fit_outcome(data, 1, "full_x", spec, seed=args.seed)
            rho_x = stabilized_pseudo_outcomes(data, p_fit.predictions,
                                               o_fit.predictions, 1)
            tau = fit_tau(data, rho_x.values, spec, seed=args.seed)
            t = tau.predictions
            add("Y1|G", (rho_x.values - t) / (t * (1 - t)) + _lg(t))
        stage = "write"
        _write_csv(out / "lines.csv", ["series", "g", "value"], rows)
        return 0
    except CfslopeError as exc:
        print(f"error in stage {stage}: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# simulate


_DGP_ANALYSIS = {
    "A_continuous": "ge", "null_GE": "ge", "collider_selection": "ge",
    "B_binary": "st_logit", "null_ST": "st_logit", "C_sequential": "st_cond",
}

_ORACLE_IDS = {
    "ge": ["linear_factual(0)", "linear_factual(1)", "linear_cf(0)", "linear_cf(1)",
           "ge_descriptive", "ge_selection_free"],
    "st_logit": ["logit_dg", "logit_factual(1)", "logit_cf(1)",
                 "st_descriptive", "st_selection_free"],
    "st_linear": ["linear_dg", "linear_factual(1)", "linear_cf(1)",
                  "st_linear_descriptive", "st_linear_selection_free"],
    "st_cond": ["logit_dg_given_p1", "logit_cf_given_p1", "st_cond_selection_free"],
    "linear_cf": ["linear_cf(1)"],
    "logit_cf": ["logit_cf(1)"],
}

# map estimate labels produced by run_ge/run_st to oracle estimand ids
_LABEL_TO_ORACLE = {
    "logit_dg_given_p1": "logit_dg_given_p1",
    "logit_cf_given_p1": "logit_cf_given_p1",
}


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = "configure"
    try:
        if args.dgp not in DGP_KINDS:
            raise ConfigurationError(
                f"unknown DGP {args.dgp!r}; valid names: {', '.join(DGP_KINDS)}")
        config = make_dgp(args.dgp, args.n, args.seed)
        analysis = args.analysis or _DGP_ANALYSIS[args.dgp]
        espec = ExperimentSpec(analysis=analysis,
                               model=ModelSpec(backend=args.backend),
                               use_cross_fit=args.cross_fit or args.backend == "neural")
        stage = "run"
        report = run_experiment(config, espec, args.reps,
                                misspecification=args.misspec, jobs=args.jobs)
        stage = "summarize"
        truths = {}
        for est in _ORACLE_IDS.get(analysis, []):
            try:
                truths[est] = oracle_truth(config, est, args.oracle_draws).value
            except ConfigurationError:
                pass
        rep_rows = [[r["rep"], r["n"], r["seed"], r["estimand"], r["point"], r["se"]]
                    for r in report.rows]
        _write_csv(out / "replications.csv",
                   ["rep", "n", "seed", "estimand", "point", "se"], rep_rows)
        summary = report.summarize(truths)
        _write_csv(out / "summary.csv",
                   ["estimand", "truth", "mean_est", "bias", "emp_sd", "mean_se", "coverage"],
                   [[s["estimand"], s["truth"], s["mean_est"], s["bias"],
                     s["emp_sd"], s["mean_se"], s["coverage"]] for s in summary])
        log = _config_echo(args, ["dgp", "n", "reps", "misspec", "analysis",
                                  "backend", "cross_fit", "seed", "jobs",
                                  "oracle_draws", "out"])
        log.append(f"master_seed = {args.seed}")
        log.append(f"dgp_config = {config}")
        (out / "run.log").write_text("\n".join(log) + "\n", encoding="utf-8")
        return 0
    except CfslopeError as exc:
        print(f"error in stage {stage}: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------


def _add_analyze_flags(p):
    p.add_argument("--input", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--d", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--p", default=None)
    p.add_argument("--x", default="", help="comma-separated covariate columns")
    p.add_argument("--analysis", choices=["ge", "st"], required=True)
    p.add_argument("--st-formulation", dest="st_formulation",
                   choices=["logit_main", "linear_alt", "conditional_alt"],
                   default="logit_main")
    p.add_argument("--backend", choices=["parametric", "neural"], default="parametric")
    p.add_argument("--cross-fit", dest="cross_fit", action="store_true")
    p.add_argument("--no-g-squared", dest="no_g_squared", action="store_true")
    p.add_argument("--trim-col", dest="trim_col", default=None)
    p.add_argument("--trim-min", dest="trim_min", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cfslope",
                                 description="Slope-contrast tests with doubly robust EIF inference")
    sub = ap.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="estimate slopes and tests from a CSV")
    _add_analyze_flags(pa)
    pa.set_defaults(func=cmd_analyze)

    pp = sub.add_parser("plot-data", help="emit fitted regression-line data")
    _add_analyze_flags(pp)
    pp.add_argument("--grid", type=int, default=101)
    pp.set_defaults(func=cmd_plot_data)

    ps = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    ps.add_argument("--dgp", required=True)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--reps", type=int, required=True)
    ps.add_argument("--misspec", default="none",
                    choices=["none", "wrong_propensity", "wrong_outcome", "both_wrong"])
    ps.add_argument("--analysis", default=None,
                    choices=["ge", "st_logit", "st_linear", "st_cond",
                             "linear_cf", "logit_cf"])
    ps.add_argument("--backend", choices=["parametric", "neural"], default="parametric")
    ps.add_argument("--cross-fit", dest="cross_fit", action="store_true")
    ps.add_argument("--jobs", type=int, default=1)
    ps.add_argument("--oracle-draws", dest="oracle_draws", type=int, default=10_000_000)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
