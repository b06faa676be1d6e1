"""Command-line interface.

Subcommands: fit, predict, cv, simulate, bet, residuals.  Every artifact
is written with fixed formatting and no timestamps, so identical inputs
and seeds give byte-identical files.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from jointcount.betting import DEFAULT_EPSILONS, return_curve, run_backtest
from jointcount.copulas import get_copula
from jointcount.data import (
    ODDS_COLUMNS,
    format_model_spec,
    load_matches,
    load_odds,
    parse_model_spec,
    write_frame,
)
from jointcount.errors import (
    ConfigError,
    DataError,
    DomainError,
    InputError,
    JointCountError,
    NumericError,
    StructuralError,
)
from jointcount.inference import (
    ThreeWay,
    cross_validate,
    metrics_table,
    predict_matches,
    quantile_residuals,
    rank_aggregate,
    score_grid,
)
from jointcount.simulation import (
    make_worldcup_data,
    penalty_config,
    recovery_config,
    run_study,
    worldcup_model_text,
)
from jointcount.solver import fit, fit_penalized

EXIT_CODES = (
    (DataError, 3),
    (ConfigError, 4),
    (StructuralError, 5),
    (DomainError, 6),
    (NumericError, 7),
    (InputError, 8),
    (JointCountError, 9),
    (OSError, 10),
)
EXIT_USAGE = 2


def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.17g}"


def bundled_path(name: str) -> Path:
    """Path of a file shipped in ``jointcount/datasets``."""
    return Path(str(resources.files("jointcount").joinpath("datasets", name)))


# ---------------------------------------------------------------------------
# shared helpers


def _load(args):
    model = parse_model_spec(args.model)
    if getattr(args, "family", None) and "," not in args.family:
        model = replace(model, family=args.family)
    if getattr(args, "xi", None) is not None:
        model = replace(model, xi=float(args.xi))
    data = load_matches(args.data, model)
    return model, data


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_model(model, data):
    opts = model.solver_options()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if model.linear_equal and model.xi > 0:
            return fit_penalized(model, data, opts)
        return fit(model, data, opts)


def _aligned_odds(path, data) -> np.ndarray:
    odds = load_odds(path)
    if "match_id" not in data.frame.columns:
        raise DataError("matching odds to matches needs a match_id column in the data")
    idx = odds.set_index("match_id")
    if not idx.index.is_unique:
        raise DataError("duplicate match_id in the odds file")
    return idx.reindex(data.frame["match_id"].to_numpy())[list(ODDS_COLUMNS)].to_numpy(dtype=float)


def _match_ids(data) -> np.ndarray:
    if "match_id" in data.frame.columns:
        return data.frame["match_id"].to_numpy()
    return np.arange(1, data.n + 1)


def coefficient_table(res) -> pd.DataFrame:
    b = res.beta_hat
    se = res.std_errors if res.std_errors is not None else np.full(b.k, np.nan)
    rows = []
    for j, name in enumerate(b.names1):
        rows.append(("margin1", name, b.beta1[j], se[j]))
    for j, name in enumerate(b.names2):
        rows.append(("margin2", name, b.beta2[j], se[b.beta1.size + j]))
    if b.beta_theta is not None:
        rows.append(("copula", "(Intercept)", float(b.beta_theta), se[-1]))
    return pd.DataFrame(rows, columns=["equation", "term", "estimate", "std_error"])


def fit_report(res, model, data) -> str:
    lines = [
        f"family: {res.family}",
        f"n_obs: {res.n_obs}",
        f"penalized: {str(res.xi > 0).lower()}",
        f"xi: {_fmt(res.xi)}",
        f"loglik: {_fmt(res.loglik)}",
        f"penalized_objective: {_fmt(res.penalized_obj)}",
        f"aic: {_fmt(res.aic)}",
        f"k: {res.k}",
        f"theta_hat: {_fmt(res.theta_hat)}",
        f"tau_hat: {_fmt(res.tau_hat)}",
        f"converged: {str(res.converged).lower()}",
        f"inner_iterations: {res.n_inner}",
        f"outer_iterations: {res.n_outer}",
        f"gradient_max_abs: {_fmt(res.grad_norm)}",
        f"effectively_independent: {str(res.effectively_independent).lower()}",
        f"max_paired_coefficient_difference: {_fmt(res.max_pair_diff)}",
    ]
    lines += [f"note: {n}" for n in data.notes]
    lines.append("")
    lines.append("# model")
    lines.append(format_model_spec(model).rstrip("\n"))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    model, data = _load(args)
    res = _fit_model(model, data)
    out = _out_dir(args)
    report = fit_report(res, model, data)
    (out / "fit_report.txt").write_text(report)
    write_frame(coefficient_table(res), out / "coefficients.csv")
    print(f"family {res.family}: loglik {res.loglik:.6f}, aic {res.aic:.6f}, converged {res.converged}")
    print(f"max paired coefficient difference: {res.max_pair_diff:.3e}")
    return 0


def cmd_predict(args) -> int:
    model, data = _load(args)
    res = _fit_model(model, data)
    target = load_matches(args.newdata, model) if args.newdata else data
    md = model.design(target)
    pm = predict_matches(res, md)
    pm.insert(0, "match_id", _match_ids(target))
    out = _out_dir(args)
    write_frame(pm, out / "three_way.csv")
    m = args.max_goals
    rows = []
    for i in range(md.n):
        g = score_grid(res, md.X1[i, 1:], md.X2[i, 1:], max_goals=m).probs
        for a in range(m + 1):
            for b in range(m + 1):
                rows.append((pm["match_id"].iloc[i], a, b, g[a, b]))
    write_frame(pd.DataFrame(rows, columns=["match_id", "y1", "y2", "prob"]), out / "score_grids.csv")
    print(f"predicted {md.n} matches with family {res.family}")
    return 0


def _families(args, model) -> list:
    if args.family:
        return [get_copula(f.strip()).code for f in args.family.split(",") if f.strip()]
    return [model.family]


def _cv_runs(args, model, data, odds):
    fams = _families(args, model)
    modes = [False, True] if (model.linear_equal and model.xi > 0) else [False]
    runs = []
    for fam in fams:
        m = replace(model, family=fam)
        for pen in modes:
            runs.append(cross_validate(data, args.folds_column, m, penalized=pen, odds=odds, epsilon=args.epsilon))
    return runs


def cmd_cv(args) -> int:
    model, data = _load(args)
    odds = _aligned_odds(args.odds, data) if args.odds else None
    runs = _cv_runs(args, model, data, odds)
    out = _out_dir(args)
    table = metrics_table(runs)
    write_frame(table, out / "metrics.csv")
    ranks = []
    for pen in sorted(table["penalized"].unique()):
        r = rank_aggregate(table[table["penalized"] == pen].reset_index(drop=True))
        r.insert(1, "penalized", pen)
        ranks.append(r)
    write_frame(pd.concat(ranks, ignore_index=True), out / "ranks.csv")
    preds, folds = [], []
    for r in runs:
        p = r.matches.copy()
        p.insert(0, "penalized", r.penalized)
        p.insert(0, "family", r.family)
        p.insert(2, "match_id", _match_ids(data)[p["row"].to_numpy()])
        preds.append(p)
        f = r.folds.copy()
        f.insert(0, "penalized", r.penalized)
        f.insert(0, "family", r.family)
        folds.append(f)
    write_frame(pd.concat(preds, ignore_index=True), out / "cv_predictions.csv")
    write_frame(pd.concat(folds, ignore_index=True), out / "cv_folds.csv")
    print(table.to_string(index=False))
    return 0


def cmd_bet(args) -> int:
    model, data = _load(args)
    if not args.odds:
        raise InputError("bet needs --odds")
    odds = _aligned_odds(args.odds, data)
    penalized = model.linear_equal and model.xi > 0
    cv = cross_validate(data, args.folds_column, model, penalized=penalized)
    rows = cv.matches["row"].to_numpy()
    preds = [ThreeWay(*r) for r in cv.matches[["pi_win", "pi_draw", "pi_loss"]].to_numpy()]
    outcomes = cv.matches["outcome"].tolist()
    ledger = run_backtest(preds, odds[rows], args.epsilon, args.staking, outcomes, _match_ids(data)[rows])
    curve = return_curve(preds, odds[rows], outcomes, DEFAULT_EPSILONS)
    out = _out_dir(args)
    write_frame(ledger.rows, out / "ledger.csv")
    write_frame(curve, out / "return_curve.csv")
    summary = (
        f"family: {cv.family}\npenalized: {str(penalized).lower()}\nstaking: {ledger.staking}\n"
        f"epsilon: {_fmt(ledger.epsilon)}\nbets: {ledger.n_bets}\ninvested: {_fmt(ledger.invested)}\n"
        f"returned: {_fmt(ledger.returned)}\nnet: {_fmt(ledger.net)}\nreturn_ratio: {_fmt(ledger.return_ratio)}\n"
    )
    (out / "bet_summary.txt").write_text(summary)
    print(summary, end="")
    return 0


def cmd_residuals(args) -> int:
    model, data = _load(args)
    res = _fit_model(model, data)
    r1, r2 = quantile_residuals(res, data, args.seed, model)
    out = _out_dir(args)
    write_frame(pd.DataFrame({"match_id": _match_ids(data), "residual1": r1, "residual2": r2}),
                out / "residuals.csv")
    lines = []
    for name, r in (("margin1", r1), ("margin2", r2)):
        ks = stats.kstest(r, "norm")
        lines.append(f"{name}: ks_statistic {_fmt(float(ks.statistic))} p_value {_fmt(float(ks.pvalue))}")
    text = "\n".join(lines) + "\n"
    (out / "residuals_summary.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    if args.study == "matches":
        matches, odds = make_worldcup_data(seed=args.seed, family=args.family or "F")
        write_frame(matches, out / "matches.csv")
        write_frame(odds, out / "odds.csv")
        (out / "model.txt").write_text(worldcup_model_text(args.family or "F", 1e9 if args.xi is None else args.xi))
        print(f"wrote {len(matches)} synthetic matches")
        return 0
    if args.study == "recovery":
        cfg = recovery_config(args.tau, replicates=args.replicates, seed=args.seed)
    else:
        kw = {} if args.xi is None else {"xi": args.xi}
        cfg = penalty_config(replicates=args.replicates, seed=args.seed, tau=abs(args.tau), **kw)
    res = run_study(cfg, workers=args.workers)
    write_frame(res.results, out / "results.csv")
    write_frame(res.summary(), out / "summary.csv")
    write_frame(res.plot_quantiles(), out / "plot_quantiles.csv")
    if args.study == "recovery":
        conf = res.aic_confusion()
        conf.to_csv(out / "aic_confusion.csv", lineterminator="\n")
        print(conf.to_string())
    else:
        pairs = res.penalty_pairs()
        write_frame(pairs, out / "penalty_pairs.csv")
        share = pairs.groupby(["true_family", "tau"])["penalized_better"].mean().reset_index()
        write_frame(share, out / "penalty_share.csv")
        print(share.to_string(index=False))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_model_args(p, data_required=True):
    p.add_argument("--model", required=True, help="model specification file")
    p.add_argument("--data", required=data_required, help="match CSV")
    p.add_argument("--family", help="copula family code (overrides the model file)")
    p.add_argument("--xi", type=float, help="penalty strength (overrides the model file)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointcount", description="Copula models for paired counts")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("fit", help="fit a model and write the report")
    _add_model_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="score grids and three-way probabilities")
    _add_model_args(p)
    p.add_argument("--newdata", help="matches to predict (default: the fitted data)")
    p.add_argument("--max-goals", type=int, default=10, help="side of the written score grids")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="leave-one-fold-out evaluation")
    _add_model_args(p)
    p.add_argument("--folds-column", required=True)
    p.add_argument("--odds")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bet", help="betting backtest on out-of-fold forecasts")
    _add_model_args(p)
    p.add_argument("--odds")
    p.add_argument("--folds-column", required=True)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--staking", choices=("constant", "kelly"), default="constant")
    p.set_defaults(func=cmd_bet)

    p = sub.add_parser("residuals", help="randomised quantile residuals")
    _add_model_args(p)
    p.set_defaults(func=cmd_residuals)

    p = sub.add_parser("simulate", help="simulation studies or synthetic match data")
    p.add_argument("study", choices=("recovery", "penalty", "matches"))
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--tau", type=float, default=0.7)
    p.add_argument("--family", help="generating family for synthetic matches")
    p.add_argument("--xi", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)
    return parser


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    try:
        return args.func(args)
    except (JointCountError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"jointcount {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "bundled_path", "EXIT_CODES"]
