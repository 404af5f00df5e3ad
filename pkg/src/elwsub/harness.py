"""Monte Carlo comparisons of UNIF, IPW, ELW and ELWAI, and sizing evaluations."""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy
from scipy.stats import norm

from .capture import CaptureSample, make_rng
from .dataset import AuxStatistic, DataMatrix, compute_aux, load_csv, standardize
from .design import build_plan, influence_vectors, pilot_fit
from .elw import ELInfeasibleError
from .estimators import KINDS, estimate
from .models import ModelFamily
from .sizing import (PrecisionSpec, chi2_quantile, elw_variance_fn, mse_bound_scale, nu_tilde,
                     satterthwaite_df, second_capture_size, size_m1, size_m2)
from .solver import RankDeficientError, fit

log = logging.getLogger(__name__)

EXAMPLES = {"poisson": 1, "logistic": 2, "quantile": 3}
QUANTILE_CASES = {1: ("normal", 0.5), 2: ("normal", 0.75), 3: ("halfnormal", 0.5),
                  4: ("halfnormal", 0.75)}


def example_family(example: str, case: int) -> ModelFamily:
    if example == "quantile":
        return ModelFamily("quantile", QUANTILE_CASES[case][1])
    return ModelFamily(example)


def true_theta(example: str, case: int) -> np.ndarray:
    if example in ("poisson", "logistic"):
        return np.full(7, -0.5)
    dist, tau = QUANTILE_CASES[case]
    q = norm.ppf(tau) if dist == "normal" else norm.ppf(0.5 + 0.5 * tau)
    theta = np.full(5, -0.5)
    theta[0] += q
    return theta


def generate_example(example: str, case: int, N: int = 50_000, seed: int = 0) -> DataMatrix:
    """Simulate one of the Poisson, logistic or quantile regression designs.

    Poisson and logistic data have seven covariates and no intercept; case 2
    correlates the first two (``X2 = X1 + U(0,1)``), case 3 makes that
    correlation near one (``U(0,0.1)``) and case 4 is case 2 with ``X6, X7``
    drawn from U(-1, 1).  Quantile data have an intercept and four standard
    normal covariates with normal or half-normal errors.
    """
    if example not in EXAMPLES:
        raise ValueError(f"unknown example {example!r}")
    if case not in (1, 2, 3, 4):
        raise ValueError(f"unknown case {case!r}")
    rng = make_rng(seed, "data")
    if example == "quantile":
        dist, tau = QUANTILE_CASES[case]
        X = np.column_stack([np.ones(N), rng.standard_normal((N, 4))])
        eps = rng.standard_normal(N)
        if dist == "halfnormal":
            eps = np.abs(eps)
        y = X @ np.full(5, -0.5) + eps
        return DataMatrix(y, X, str(example_family(example, case)), True)
    X = rng.random((N, 7))
    if case in (2, 3, 4):
        eps = rng.random(N) * (0.1 if case == 3 else 1.0)
        X[:, 1] = X[:, 0] + eps
    if case == 4:
        X[:, 5:7] = rng.uniform(-1.0, 1.0, (N, 2))
    eta = X @ true_theta(example, case)
    if example == "poisson":
        y = rng.poisson(np.exp(eta)).astype(float)
    else:
        y = (rng.random(N) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return DataMatrix(y, X, example)


@dataclass
class SimConfig:
    example: str = "logistic"
    case: int = 1
    N: int = 50_000
    r0: int = 200
    r_values: Sequence[int] = (300, 500, 1000, 2000)
    repetitions: int = 300
    criterion: str = "A"
    estimators: Sequence[str] = KINDS
    seed: int = 0
    mode: str = "standard"
    regenerate: bool = False
    ipw_shrinkage: float = 0.0

    def __post_init__(self):
        self.r_values = tuple(int(r) for r in self.r_values)
        self.estimators = tuple(e.upper() for e in self.estimators)
        bad = set(self.estimators) - set(KINDS)
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")
        if self.criterion not in ("A", "L"):
            raise ValueError("criterion must be A or L")
        if self.r_values and self.r0 + max(self.r_values) >= self.N:
            raise ValueError("r0 + max(r) must be below N")


@dataclass
class CellStats:
    """Running totals for one (estimator, r) cell."""

    sq_errors: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    fallbacks: int = 0
    failures: int = 0

    def summary(self, c0=None, d=None):
        se = np.array(self.sq_errors)
        out = {
            "mse": float(se.mean()) if se.size else float("nan"),
            "mean_n": float(np.mean(self.sizes)) if self.sizes else float("nan"),
            "fallback_rate": self.fallbacks / max(len(se), 1),
            "failures": self.failures,
            "successes": int(se.size),
        }
        if c0 is not None:
            out["mse_ratio"] = out["mse"] / c0
        if d is not None:
            out["coverage"] = float(np.mean(se <= d * d)) if se.size else float("nan")
        return out


@dataclass
class RunResult:
    theta_full: np.ndarray
    cells: dict
    config: dict
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def rows(self):
        """Flat ``(estimator, r, metric, value)`` records in a fixed order."""
        out = []
        for (est, r), stats in self.cells.items():
            for metric, value in stats.items():
                out.append((est, r, metric, value))
        return out

    def mse(self, est, r):
        return self.cells[(est, r)]["mse"]

    @property
    def failure_count(self):
        return int(sum(s.get("failures", 0) for s in self.cells.values()))


class Pipeline:
    """One dataset, its full-data fit and auxiliary information."""

    def __init__(self, data: DataMatrix, family: ModelFamily, r0: int,
                 aux: Optional[AuxStatistic] = None, criterion="A", mode="standard",
                 ipw_shrinkage=0.0):
        self.data = data
        self.r0 = int(r0)
        self.family = family
        self.aux = compute_aux(data) if aux is None else aux
        self.criterion = criterion
        self.mode = mode
        self.ipw_shrinkage = float(ipw_shrinkage)
        full = fit(family, data.response, data.covariates, np.ones(data.n_rows))
        if not full.converged:
            log.warning("full-data fit did not converge")
        self.theta_full = full.theta_hat

    @property
    def N(self):
        return self.data.n_rows

    def repetition(self, seed, r_values, estimators, sizer=None):
        """Run all estimators for every ``r`` on the captures of one repetition.

        Returns ``{(estimator, r): (theta_hat, n, fell_back)}`` with failures
        recorded as exceptions.  ``sizer(pilot_idx)`` may supply a
        repetition-specific list of ``r`` values instead of ``r_values``.
        """
        N, data, fam = self.N, self.data, self.family
        y, X, H = data.response, data.covariates, self.aux.h_values
        u1 = make_rng(seed, "first").random(N)
        u2 = make_rng(seed, "second").random(N)
        alpha10 = self.r0 / N
        d1 = u1 < alpha10
        pidx = np.flatnonzero(d1)
        out = {}
        if sizer is not None:
            r_values = sizer(pidx)
        need_plan = [e for e in estimators if e != "UNIF"]
        base = None
        if need_plan:
            try:
                base = pilot_fit(fam, y[pidx], X[pidx], min(2 * alpha10, 0.5), None,
                                 self.criterion)
                a_all = influence_vectors(fam, y, X, base.theta_pilot, base.v_pilot, self.criterion)
            except Exception as exc:  # pilot failures void every planned estimator
                base = exc
        for key_r, r in r_values:
            r = float(r)
            alpha0 = 1.0 - (1.0 - alpha10) * (1.0 - r / N)
            for est in estimators:
                try:
                    if est == "UNIF":
                        d = u1 < (self.r0 + r) / N
                        sample = CaptureSample(d, np.zeros(N, bool), np.full(N, (self.r0 + r) / N))
                        res = estimate("UNIF", sample, data, fam)
                        out[(est, key_r)] = (res.theta_hat, sample.n, False)
                        continue
                    if isinstance(base, Exception):
                        raise base
                    aux_cols = H if est == "ELWAI" else None
                    pf = replace(base, h_pilot=H[pidx] if est == "ELWAI" else None)
                    pf = pf.at_alpha0(alpha0, project=(est != "IPW"))
                    plan = build_plan(pf, y, X, aux_cols, alpha10, a_all=a_all,
                                      shrinkage=self.ipw_shrinkage if est == "IPW" else 0.0)
                    d2 = u2 < plan.pi
                    sample = CaptureSample(d1, d2, plan.phi_e)
                    res = estimate(est, sample, data, fam, float(plan.phi_e.mean()),
                                   self.aux, base.theta_pilot, self.mode)
                    out[(est, key_r)] = (res.theta_hat, sample.n,
                                         res.el_status == "fallback_unknown_alpha")
                except (ValueError, ELInfeasibleError, np.linalg.LinAlgError, RankDeficientError) as exc:
                    out[(est, key_r)] = exc
        return out


def _sq_err(theta, ref):
    return float(np.sum((theta - ref) ** 2))


def run_comparison(config: SimConfig, data: Optional[DataMatrix] = None,
                   family: Optional[ModelFamily] = None) -> RunResult:
    """Empirical MSE of every estimator against the full-data fit for each ``r``."""
    t0 = time.perf_counter()
    if data is None:
        data = generate_example(config.example, config.case, config.N, config.seed)
        family = example_family(config.example, config.case)
    pipe = Pipeline(data, family, config.r0, criterion=config.criterion, mode=config.mode,
                    ipw_shrinkage=config.ipw_shrinkage)
    cells = {(e, r): CellStats() for e in config.estimators for r in config.r_values}
    theta_full = pipe.theta_full
    for b in range(config.repetitions):
        if config.regenerate and b > 0:
            pipe = Pipeline(generate_example(config.example, config.case, config.N, config.seed + b),
                            family, config.r0, criterion=config.criterion, mode=config.mode,
                            ipw_shrinkage=config.ipw_shrinkage)
        res = pipe.repetition(config.seed + b, [(r, r) for r in config.r_values], config.estimators)
        for key, val in res.items():
            _record(cells[key], val, pipe.theta_full)
    summary = {k: v.summary() for k, v in cells.items()}
    return RunResult(theta_full, summary, _config_dict(config), time.perf_counter() - t0)


def _record(cell: CellStats, val, ref):
    if isinstance(val, Exception):
        cell.failures += 1
        return
    theta, n, fell_back = val
    cell.sq_errors.append(_sq_err(theta, ref))
    cell.sizes.append(n)
    cell.fallbacks += int(fell_back)


def _config_dict(config):
    d = asdict(config)
    d["r_values"] = list(d["r_values"])
    d["estimators"] = list(d["estimators"])
    return d


# ---------------------------------------------------------------------------
# sample size evaluation

def calibration_pilot(pipe: Pipeline, r0, seed, aux=False):
    N = pipe.N
    u1 = make_rng(seed, "first").random(N)
    pidx = np.flatnonzero(u1 < r0 / N)
    y, X = pipe.data.response[pidx], pipe.data.covariates[pidx]
    h = pipe.aux.h_values[pidx] if aux else None
    return pilot_fit(pipe.family, y, X, (r0 + 1) / N, h, "A"), y, X


def requirement_grid(pipe: Pipeline, r0, r_targets, kind="R1", a=0.05, seed=0):
    """Precision targets whose sizes on a calibration pilot give ``r_targets``."""
    N = pipe.N
    pilot, y, X = calibration_pilot(pipe, r0, seed + 10**6)
    specs = []
    for r in r_targets:
        n0 = r0 + r * (N - r0) / N
        if kind == "R1":
            specs.append(PrecisionSpec("R1", c0=mse_bound_scale(pilot, n0 / N) / n0))
        else:
            S = elw_variance_fn(pilot, y, X, r0 / N, N)(n0)
            d = np.sqrt(chi2_quantile(satterthwaite_df(S), 1 - a) / (nu_tilde(S) * N))
            specs.append(PrecisionSpec("R2", d=float(d), a=a))
    return specs


def size_for(spec: PrecisionSpec, pilot, y, X, r0, N, method="satterthwaite"):
    alpha10 = r0 / N
    if spec.kind == "R1":
        return size_m1(pilot, alpha10, N, spec.c0)
    return size_m2(elw_variance_fn(pilot, y, X, alpha10, N), N, spec.d, spec.a, r0,
                   method=method, tol=1e-5)


def run_sizing_eval(config: SimConfig, specs: Sequence[PrecisionSpec],
                    data: Optional[DataMatrix] = None, family: Optional[ModelFamily] = None,
                    method="satterthwaite") -> RunResult:
    """Realized MSE/C0 ratios (R1) or coverages (R2) at the sizes chosen per repetition.

    Each repetition sizes the second capture from its own pilot with the
    ELW criterion (no auxiliary information), then runs every estimator with
    the pair ``(r0, r~)``; UNIF uses ``r0 + r~`` units.
    """
    t0 = time.perf_counter()
    if data is None:
        data = generate_example(config.example, config.case, config.N, config.seed)
        family = example_family(config.example, config.case)
    pipe = Pipeline(data, family, config.r0, criterion=config.criterion, mode=config.mode,
                    ipw_shrinkage=config.ipw_shrinkage)
    N, r0 = pipe.N, config.r0
    keys = list(range(len(specs)))
    cells = {(e, k): CellStats() for e in config.estimators for k in keys}
    r_used = {k: [] for k in keys}
    size_failures = {k: 0 for k in keys}

    for b in range(config.repetitions):
        seed = config.seed + b

        def sizer(pidx):
            y, X = data.response[pidx], data.covariates[pidx]
            pilot = pilot_fit(family, y, X, (r0 + 1) / N, None, "A")
            chosen = []
            for k, spec in enumerate(specs):
                try:
                    res = size_for(spec, pilot, y, X, r0, N, method)
                except (ValueError, np.linalg.LinAlgError) as exc:
                    log.info("sizing failed: %s", exc)
                    size_failures[k] += 1
                    continue
                r_used[k].append(res.r_second)
                chosen.append((k, max(res.r_second, 1.0)))
            return chosen

        try:
            res = pipe.repetition(seed, None, config.estimators, sizer=sizer)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.info("repetition %d failed: %s", b, exc)
            for k in keys:
                size_failures[k] += 1
            continue
        for key, val in res.items():
            _record(cells[key], val, pipe.theta_full)

    summary = {}
    for (e, k), c in cells.items():
        spec = specs[k]
        s = c.summary(c0=spec.c0, d=spec.d)
        s["mean_r"] = float(np.mean(r_used[k])) if r_used[k] else float("nan")
        s["sizing_failures"] = size_failures[k]
        summary[(e, k)] = s
    extra = {"specs": [asdict(s) for s in specs]}
    return RunResult(pipe.theta_full, summary, _config_dict(config), time.perf_counter() - t0, extra)


def analyze_csv(path, family: ModelFamily, config: SimConfig, response=0, covariates=None,
                header=True, intercept=True, standardize_response=False) -> RunResult:
    """Load and standardize a CSV dataset, then run the comparison on it."""
    data = load_csv(path, response, covariates, header, intercept, str(family))
    data, _ = standardize(data, standardize_response)
    config = replace(config, N=data.n_rows)
    if not config.r_values:
        full = fit(family, data.response, data.covariates, np.ones(data.n_rows))
        return RunResult(full.theta_hat, {}, _config_dict(config))
    return run_comparison(config, data, family)


# ---------------------------------------------------------------------------
# output

def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_results(result: RunResult, out_dir, command="simulate"):
    """Write ``results.csv`` and ``manifest.json`` into ``out_dir``.

    The CSV holds only deterministic quantities; wall time and library
    versions go to the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "results.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "r", "metric", "value"])
        for est, r, metric, value in result.rows():
            w.writerow([est, r, metric, _fmt(value)])
        for j, v in enumerate(result.theta_full):
            w.writerow(["FULL", "", f"theta_{j}", _fmt(v)])
    manifest = {
        "command": command,
        "config": result.config,
        "failures": result.failure_count,
        "wall_time_seconds": result.wall_time,
        "theta_full": [float(v) for v in result.theta_full],
        "extra": result.extra,
        "versions": {"elwsub": _package_version(), "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    with (out / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return out / "results.csv", out / "manifest.json"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return str(obj)


def _package_version():
    from . import __version__
    return __version__
