"""Command-line interface: test, select, simulate, calibrate.

Exit codes: 0 success, 2 input error, 3 statistical degeneracy,
4 capacity guard.  All randomized commands are reproducible from their
``--seed``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .baselines import (
    anderson_darling_2sample,
    anova_one_way,
    anova_two_way,
    ks_two_sample,
    welch_t,
    wilcoxon_rank_sum,
)
from .dataset import load_columns, load_table, read_delimited
from .engine import Hyperparams, bf_dynamic_program
from .errors import CapacityError, DegenerateDataError, InputError, SliceBfError
from .permutation import (
    PermutationPlan,
    calibrate_constants,
    default_calibration_path,
    formula_pvalue,
    load_calibration_table,
    lookup_constants,
    mc_pvalue,
    save_calibration_entry,
)
from .selection import SelectionConfig, select
from .simulation import (
    CONDITIONAL_FAMILIES,
    CONDITIONAL_METHODS,
    TWO_SAMPLE_FAMILIES,
    TWO_SAMPLE_METHODS,
    ScenarioSpec,
    simulate_scores,
)

SCHEMA_VERSION = 1


def _comma_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _emit(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha0", type=float, default=1.0, help="Dirichlet total mass (default 1)")
    p.add_argument("--lambda0", type=float, default=1.0, help="boundary-prior exponent (default 1)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker threads for permutation replicates (default: cores)")
    p.add_argument("--output", default=None, help="write the JSON result here instead of stdout")


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="CSV/TSV file with a header row")
    p.add_argument("--delimiter", default=None, help="field delimiter (default: by extension)")
    p.add_argument("--response", "-y", required=True, help="numeric response column")


_BASELINES = {
    "t": "welch_t",
    "ranksum": "wilcoxon_rank_sum",
    "ks": "ks_two_sample",
    "ad": "anderson_darling",
    "anova": "anova_one_way",
    "anova2": "anova_two_way",
}


def _run_baseline(method: str, d) -> dict:
    if method in ("t", "ranksum", "ks", "ad"):
        if d.n_x_levels != 2:
            raise InputError(f"method {method!r} needs a two-level covariate")
        a, b = d.y[d.x == 0], d.y[d.x == 1]
        fn = {
            "t": welch_t,
            "ranksum": wilcoxon_rank_sum,
            "ks": ks_two_sample,
            "ad": anderson_darling_2sample,
        }[method]
        return fn(a, b).as_dict()
    if method == "anova":
        return anova_one_way(d.y, d.x).as_dict()
    if method == "anova2":
        if d.n_z_levels < 2:
            raise InputError("anova2 needs --given columns")
        return anova_two_way(d.y, d.x, d.z).as_dict()
    raise InputError(f"unknown method {method!r} (choose from {sorted(_BASELINES)})")


def cmd_test(args) -> int:
    _, rows = read_delimited(args.input, args.delimiter)
    d = load_table(
        rows,
        args.response,
        _comma_list(args.covariate),
        _comma_list(args.given) if args.given else (),
    )
    hyper = Hyperparams(args.alpha0, args.lambda0)
    result = bf_dynamic_program(d, hyper)
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "test",
        "n": d.n,
        "covariate": args.covariate,
        "given": args.given,
        "n_x_levels": d.n_x_levels,
        "n_z_levels": d.n_z_levels,
        "alpha0": hyper.alpha0,
        "lambda0": hyper.lambda0,
        "log_bf": result.log_bf,
        "bf": result.bf,
        "x_labels": list(d.x_labels) if d.x_labels else None,
        "z_labels": list(d.z_labels) if d.z_labels else None,
    }
    constants = lookup_constants(d, hyper, load_calibration_table(args.calibration))
    if constants is not None:
        doc["formula_pvalue"] = formula_pvalue(max(result.bf, 1.0), d.n, constants)
        doc["formula_context"] = constants.context
    if args.permutations > 0:
        plan = PermutationPlan(replicates=args.permutations, seed=args.seed, jobs=args.jobs)
        mc = mc_pvalue(result.log_bf, d, hyper, plan)
        doc["mc_pvalue"] = mc.pvalue
        doc["mc_replicates"] = args.permutations
    if args.methods:
        doc["baselines"] = [_run_baseline(m, d) for m in _comma_list(args.methods)]
    _emit(doc, args.output)
    return 0


def cmd_select(args) -> int:
    fields, rows = read_delimited(args.input, args.delimiter)
    if args.covariates:
        cols = _comma_list(args.covariates)
    else:
        cols = [c for c in fields if c != args.response]
    if not cols:
        raise InputError("no covariate columns")
    datasets = load_columns(rows, args.response, cols)
    rule, _, value = args.stop_rule.partition(":")
    if rule == "perm":
        config_kw = {"stop_rule": "permutation", "p_cutoff": float(value or 0.05)}
    elif rule == "bf":
        config_kw = {"stop_rule": "bf", "bf_threshold": float(value or 150.0)}
    else:
        raise InputError(f"unknown stop rule {args.stop_rule!r} (use perm:P or bf:B)")
    config = SelectionConfig(
        screen_threshold=args.b0,
        permutations=args.permutations,
        max_steps=args.max_steps,
        max_super_levels=args.max_super_levels,
        seed=args.seed,
        jobs=args.jobs,
        screen_pvalue=args.screen_pvalue,
        **config_kw,
    )
    trace = select(datasets, Hyperparams(args.alpha0, args.lambda0), config)
    doc = trace.to_json_dict()
    doc["command"] = "select"
    doc["selected_labels"] = [datasets[j].name for j in trace.final_set]
    _emit(doc, args.output)
    return 0


def cmd_simulate(args) -> int:
    spec = ScenarioSpec(
        family=args.scenario,
        n=args.n,
        mu=args.mu,
        sigma=args.sigma,
        theta=args.theta,
        gamma=args.gamma,
        p0=args.p0,
    )
    if args.methods:
        methods = _comma_list(args.methods)
    elif args.scenario in TWO_SAMPLE_FAMILIES:
        methods = ["bf", "t", "ranksum", "ks", "ad"]
    elif args.scenario in CONDITIONAL_FAMILIES:
        methods = ["bf", "anova2"]
    else:
        raise InputError(f"unknown scenario {args.scenario!r}")
    allowed = TWO_SAMPLE_METHODS if args.scenario in TWO_SAMPLE_FAMILIES else CONDITIONAL_METHODS
    for m in methods:
        if m not in allowed:
            raise InputError(f"method {m!r} does not apply to scenario {args.scenario!r}")
    table = simulate_scores(
        spec, methods, args.reps, Hyperparams(args.alpha0, args.lambda0), seed=args.seed
    )
    tsv_path = args.scores or f"{args.scenario}_scores.tsv"
    with open(tsv_path, "w") as fh:
        fh.write("method\treplicate\thypothesis\tscore\n")
        for method, rep, hyp, score in table.rows():
            fh.write(f"{method}\t{rep}\t{hyp}\t{score!r}\n")
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "simulate",
        "scenario": args.scenario,
        "n": args.n,
        "replicates": args.reps,
        "seed": args.seed,
        "methods": methods,
        "auc": table.aucs(),
        "scores_tsv": tsv_path,
    }
    _emit(doc, args.output)
    return 0


def cmd_calibrate(args) -> int:
    n_grid = [int(v) for v in _comma_list(args.n_grid)]
    b_grid = [float(v) for v in _comma_list(args.b_grid)]
    if len(n_grid) < 2 or len(b_grid) < 2:
        raise InputError("calibration grid needs at least 2 sample sizes and 2 cutoffs")
    hyper = Hyperparams(args.alpha0, args.lambda0)
    freq = tuple(float(v) for v in _comma_list(args.freq))
    constants, cells = calibrate_constants(
        kind=args.mode,
        n_grid=n_grid,
        b_grid=b_grid,
        shuffles=args.shuffles,
        p=args.p,
        freq=freq,
        hyper=hyper,
        seed=args.seed,
        jobs=args.jobs,
    )
    if args.mode == "unconditional":
        # frequency vectors are stored in level order (x=0 first)
        shape = {"n_x_levels": 2, "n_z_levels": 1, "freq": (1 - args.p, args.p)}
    else:
        shape = {"n_x_levels": 2, "n_z_levels": 2, "freq": freq}
    table_path = args.table or default_calibration_path()
    save_calibration_entry(
        table_path, shape["n_x_levels"], shape["n_z_levels"], shape["freq"], hyper, constants
    )
    doc = {
        "schema": SCHEMA_VERSION,
        "command": "calibrate",
        "mode": args.mode,
        "alpha": constants.alpha,
        "beta": constants.beta,
        "gamma": constants.gamma,
        "context": constants.context,
        "residual_rms": constants.residual_rms,
        "table": table_path,
        "grid": [
            {"b": c.b, "n": c.n, "rate": c.rate, "exceedances": c.exceedances}
            for c in cells
        ],
    }
    _emit(doc, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicebf",
        description="Bayes-factor dependence tests for categorical covariates "
        "and a continuous response.",
    )
    parser.add_argument("--version", action="version", version=f"slicebf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="dependence / conditional dependence test on a file")
    _add_input(p)
    p.add_argument("--covariate", "-x", required=True,
                   help="covariate column (comma-join several into one super variable)")
    p.add_argument("--given", "-z", default=None,
                   help="conditioning columns, comma-separated (super-encoded)")
    p.add_argument("--permutations", "-B", type=int, default=0,
                   help="Monte Carlo p-value replicates (0 = skip)")
    p.add_argument("--methods", default=None,
                   help=f"baseline tests to run, comma-separated ({','.join(sorted(_BASELINES))})")
    p.add_argument("--calibration", default=None,
                   help="calibration table JSON (default: $SLICEBF_CALIBRATION)")
    _add_common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("select", help="screening + forward stepwise selection")
    _add_input(p)
    p.add_argument("--covariates", default=None,
                   help="comma-separated covariate columns (default: all non-response)")
    p.add_argument("--b0", type=float, default=10.0, help="screening BF threshold (default 10)")
    p.add_argument("--stop-rule", default="perm:0.05",
                   help="perm:P (permutation p cutoff) or bf:B (fixed BF threshold)")
    p.add_argument("--permutations", "-B", type=int, default=1000,
                   help="replicates for the permutation stop rule")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--max-super-levels", type=int, default=64)
    p.add_argument("--screen-pvalue", action="store_true",
                   help="also attach a scan-wide permutation p-value to the first step")
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="power-study scenario scores and AUCs")
    p.add_argument("--scenario", required=True,
                   help=f"one of {', '.join(TWO_SAMPLE_FAMILIES + CONDITIONAL_FAMILIES)}")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--methods", default=None, help="comma-separated method names")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--p0", type=float, default=None)
    p.add_argument("--scores", default=None,
                   help="per-replicate TSV path (default <scenario>_scores.tsv)")
    _add_common(p)
    p.set_defaults(func=cmd_simulate, _needs_seed=True)

    p = sub.add_parser("calibrate", help="fit the null-tail formula constants by shuffling")
    p.add_argument("--mode", choices=["unconditional", "conditional"], default="unconditional")
    p.add_argument("--p", type=float, default=0.5, help="covariate frequency (unconditional)")
    p.add_argument("--freq", default="0.25,0.25,0.25,0.25",
                   help="configuration frequencies, group-major (conditional)")
    p.add_argument("--n-grid", default="100,200,400,800")
    p.add_argument("--b-grid", default="2,5,10,20")
    p.add_argument("--shuffles", type=int, default=5000)
    p.add_argument("--table", default=None,
                   help="calibration JSON to update (default: $SLICEBF_CALIBRATION)")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "_needs_seed", False) and args.seed is None:
        parser.error("simulate requires --seed for reproducibility")
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"slicebf: capacity: {exc}", file=sys.stderr)
        return 4
    except DegenerateDataError as exc:
        print(f"slicebf: degenerate data: {exc}", file=sys.stderr)
        return 3
    except (InputError, SliceBfError, OSError) as exc:
        print(f"slicebf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
