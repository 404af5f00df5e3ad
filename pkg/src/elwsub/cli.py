"""Command line entry points: ``simulate``, ``analyze``, ``samplesize`` and ``compare``.

Run as ``python -m elwsub <command> ...``.  Exit status is 0 on success, 2
when some repetitions failed and 1 on a fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .dataset import load_csv, standardize
from .design import pilot_fit
from .estimators import KINDS
from .capture import make_rng
from .harness import (Pipeline, SimConfig, analyze_csv, example_family, generate_example,
                      requirement_grid, run_comparison, run_sizing_eval, size_for, write_results)
from .models import parse_family
from .sizing import parse_requirement

log = logging.getLogger("elwsub")

DEFAULT_R = (300, 500, 1000, 2000)


def _common(p: argparse.ArgumentParser, sim=True):
    if sim:
        p.add_argument("--example", choices=("poisson", "logistic", "quantile"), default="logistic")
        p.add_argument("--case", type=int, choices=(1, 2, 3, 4), default=1)
        p.add_argument("--n", type=int, default=50_000, help="size of the simulated dataset")
    p.add_argument("--r0", type=int, default=200, help="expected first-capture size")
    p.add_argument("--r", type=int, action="append", help="expected second-capture size (repeatable)")
    p.add_argument("--reps", type=int, default=300)
    p.add_argument("--criterion", choices=("A", "L"), default="A")
    p.add_argument("--estimators", default=",".join(KINDS),
                   help="comma separated subset of " + ",".join(KINDS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("standard", "negligible"), default="standard")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--ipw-shrinkage", type=float, default=0.0,
                   help="mix the IPW plan with the constant plan by this weight")
    p.add_argument("-v", "--verbose", action="store_true")


def _csv_args(p):
    p.add_argument("--csv", required=True, help="numeric CSV file")
    p.add_argument("--family", required=True, help="ols, logistic, poisson or quantile:TAU")
    p.add_argument("--response", default="0", help="response column (index or name)")
    p.add_argument("--covariates", help="comma separated covariate columns (default: all others)")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--standardize-response", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elwsub", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte Carlo MSE comparison on a simulated example")
    _common(p)
    p.add_argument("--regenerate", action="store_true",
                   help="draw a fresh dataset for every repetition")

    p = sub.add_parser("analyze", help="MSE comparison on a CSV dataset")
    _common(p, sim=False)
    _csv_args(p)

    p = sub.add_parser("samplesize", help="subsample size for a precision requirement")
    _common(p)
    p.add_argument("--csv", help="use a CSV dataset instead of a simulated example")
    p.add_argument("--family", help="model family for --csv")
    p.add_argument("--response", default="0")
    p.add_argument("--covariates")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--standardize-response", action="store_true")
    p.add_argument("--require", "--requirement", dest="require", required=True,
                   help="mse:C0 or abserr:d,a")
    p.add_argument("--method", choices=("satterthwaite", "two_step"), default="satterthwaite")

    p = sub.add_parser("compare", help="evaluate M1/M2 sizes by simulation")
    _common(p)
    p.add_argument("--require", "--requirement", dest="require", action="append",
                   help="explicit requirement (repeatable); overrides --targets")
    p.add_argument("--kind", choices=("R1", "R2"), default="R1",
                   help="requirement type for the calibrated grid")
    p.add_argument("--targets", type=int, nargs="+",
                   help="second-capture sizes the calibrated grid should map to")
    p.add_argument("--a", type=float, default=0.05, help="miss probability for R2")
    p.add_argument("--method", choices=("satterthwaite", "two_step"), default="satterthwaite")
    return parser


def _config(args, r_values) -> SimConfig:
    return SimConfig(
        example=getattr(args, "example", "logistic"), case=getattr(args, "case", 1),
        N=getattr(args, "n", 50_000), r0=args.r0, r_values=r_values, repetitions=args.reps,
        criterion=args.criterion, estimators=[e.strip() for e in args.estimators.split(",") if e.strip()],
        seed=args.seed, mode=args.mode, regenerate=getattr(args, "regenerate", False),
        ipw_shrinkage=args.ipw_shrinkage)


def _load(args):
    cov = None if not args.covariates else args.covariates.split(",")
    family = parse_family(args.family)
    data = load_csv(args.csv, args.response, cov, not args.no_header, not args.no_intercept,
                    str(family))
    data, _ = standardize(data, args.standardize_response)
    return data, family


def _finish(result, args, command) -> int:
    csv_path, _ = write_results(result, args.out, command)
    print(f"wrote {csv_path}")
    failures = result.failure_count
    if failures:
        print(f"{failures} estimator fits failed", file=sys.stderr)
        return 2
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args, args.r or DEFAULT_R)
    return _finish(run_comparison(cfg), args, "simulate")


def cmd_analyze(args) -> int:
    cov = None if not args.covariates else args.covariates.split(",")
    family = parse_family(args.family)
    cfg = _config(args, args.r if args.r is not None else DEFAULT_R)
    result = analyze_csv(args.csv, family, cfg, args.response, cov, not args.no_header,
                         not args.no_intercept, args.standardize_response)
    return _finish(result, args, "analyze")


def cmd_samplesize(args) -> int:
    if args.csv:
        if not args.family:
            raise ValueError("--family is required with --csv")
        data, family = _load(args)
    else:
        data = generate_example(args.example, args.case, args.n, args.seed)
        family = example_family(args.example, args.case)
    spec = parse_requirement(args.require)
    N = data.n_rows
    if not 0 < args.r0 < N:
        raise ValueError("r0 must lie in (0, N)")
    u1 = make_rng(args.seed, "first").random(N)
    pidx = np.flatnonzero(u1 < args.r0 / N)
    y, X = data.rows(pidx)
    pilot = pilot_fit(family, y, X, min(2 * args.r0 / N, 0.5), None, "A")
    res = size_for(spec, pilot, y, X, args.r0, N, args.method)
    out = {"requirement": args.require, "N": N, "r0": args.r0, "pilot_size": int(pidx.size),
           "n0": res.n0, "r_second": res.r_second, "nu_star": res.nu_star,
           "iterations": res.iterations, "clipped": res.clipped}
    print(json.dumps(out, indent=2))
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args, ())
    data = generate_example(cfg.example, cfg.case, cfg.N, cfg.seed)
    family = example_family(cfg.example, cfg.case)
    if args.require:
        specs = [parse_requirement(t) for t in args.require]
    else:
        targets = args.targets or list(np.linspace(300, 2000, 10).round().astype(int))
        pipe = Pipeline(data, family, cfg.r0)
        specs = requirement_grid(pipe, cfg.r0, targets, args.kind, args.a, cfg.seed)
    result = run_sizing_eval(cfg, specs, data, family, args.method)
    return _finish(result, args, "compare")


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "samplesize": cmd_samplesize,
            "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
