import json

import numpy as np
import pytest
from scipy.stats import norm

from elwsub.cli import main
from elwsub.dataset import DataMatrix
from elwsub.harness import (Pipeline, SimConfig, analyze_csv, example_family, generate_example,
                            run_comparison, true_theta, write_results)
from elwsub.models import ModelFamily
from elwsub.solver import fit


def test_case_correlations():
    x = generate_example("poisson", 2, 50_000, 0).covariates
    assert np.corrcoef(x[:, 0], x[:, 1])[0, 1] == pytest.approx(0.7, abs=0.03)
    x = generate_example("poisson", 3, 50_000, 0).covariates
    assert np.corrcoef(x[:, 0], x[:, 1])[0, 1] == pytest.approx(0.995, abs=0.003)
    x = generate_example("logistic", 4, 50_000, 0).covariates
    assert x[:, 5:].min() < -0.99 and x[:, :5].min() >= 0


def test_quantile_targets():
    assert true_theta("quantile", 1)[0] == -0.5
    assert true_theta("quantile", 2)[0] == pytest.approx(norm.ppf(0.75) - 0.5)
    assert true_theta("quantile", 3)[0] == pytest.approx(norm.ppf(0.75) - 0.5)
    assert true_theta("quantile", 4)[0] == pytest.approx(norm.ppf(0.875) - 0.5)
    np.testing.assert_array_equal(true_theta("logistic", 2), np.full(7, -0.5))


@pytest.mark.parametrize("case", [1, 4])
def test_quantile_full_fit_near_target(case):
    data = generate_example("quantile", case, 50_000, 1)
    fam = example_family("quantile", case)
    theta = fit(fam, data.response, data.covariates, np.ones(data.n_rows)).theta_hat
    np.testing.assert_allclose(theta, true_theta("quantile", case), atol=0.03)


def test_unknown_case_and_example():
    with pytest.raises(ValueError):
        generate_example("logistic", 5, 100, 0)
    with pytest.raises(ValueError):
        generate_example("gamma", 1, 100, 0)


def test_config_invariant():
    with pytest.raises(ValueError, match="r0"):
        SimConfig(N=1000, r0=200, r_values=(800,))
    with pytest.raises(ValueError):
        SimConfig(estimators=("MLE",))


def test_single_unif_repetition():
    cfg = SimConfig("logistic", 1, 5000, 100, (200,), 1, estimators=("UNIF",), seed=3)
    res = run_comparison(cfg)
    data = generate_example("logistic", 1, 5000, 3)
    from elwsub.capture import make_rng
    idx = np.flatnonzero(make_rng(3, "first").random(5000) < 300 / 5000)
    theta = fit(ModelFamily("logistic"), data.response[idx], data.covariates[idx],
                np.ones(idx.size)).theta_hat
    assert res.mse("UNIF", 200) == pytest.approx(np.sum((theta - res.theta_full) ** 2), rel=1e-12)


def test_accounting_and_unif_size():
    N, r0, r, reps = 20_000, 200, 600, 60
    data = generate_example("logistic", 1, N, 5)
    pipe = Pipeline(data, ModelFamily("logistic"), r0)
    res = run_comparison(SimConfig("logistic", 1, N, r0, (r,), reps, seed=5), data,
                         ModelFamily("logistic"))
    unif = res.cells[("UNIF", r)]
    sd = np.sqrt(N * ((r0 + r) / N) * (1 - (r0 + r) / N) / reps)
    assert abs(unif["mean_n"] - (r0 + r)) <= 4 * sd
    assert res.failure_count == 0
    assert all(res.cells[k]["mse"] >= 0 for k in res.cells)
    # planned estimators: realized size against the plan's own expectation
    from elwsub.capture import make_rng
    from elwsub.design import build_plan, pilot_fit
    sizes, expect, var = [], [], []
    alpha10 = r0 / N
    alpha0 = 1 - (1 - alpha10) * (1 - r / N)
    for b in range(reps):
        pidx = np.flatnonzero(make_rng(5 + b, "first").random(N) < alpha10)
        pilot = pilot_fit(pipe.family, data.response[pidx], data.covariates[pidx], alpha0)
        plan = build_plan(pilot, data.response, data.covariates, None, alpha10, alpha0)
        expect.append(plan.phi_e.sum())
        var.append(np.sum(plan.phi_e * (1 - plan.phi_e)))
    sd = np.sqrt(np.sum(var)) / reps
    assert abs(res.cells[("ELW", r)]["mean_n"] - np.mean(expect)) <= 4 * sd


def test_reproducible_outputs(tmp_path):
    cfg = SimConfig("poisson", 2, 5000, 100, (200, 400), 3, seed=9)
    a = write_results(run_comparison(cfg), tmp_path / "a")[0].read_bytes()
    b = write_results(run_comparison(cfg), tmp_path / "b")[0].read_bytes()
    assert a == b
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 9 and "versions" in manifest


def test_regenerate_flag_changes_results():
    base = SimConfig("logistic", 1, 4000, 100, (200,), 3, seed=1)
    fixed = run_comparison(base)
    fresh = run_comparison(SimConfig("logistic", 1, 4000, 100, (200,), 3, seed=1,
                                     regenerate=True))
    assert fixed.mse("ELW", 200) != fresh.mse("ELW", 200)


def test_analyze_csv_full_fit_only(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 2))
    y = rng.poisson(np.exp(0.3 + X @ np.array([0.5, -0.2])))
    path = tmp_path / "d.csv"
    np.savetxt(path, np.column_stack([y, X]), delimiter=",", header="y,a,b", comments="")
    res = analyze_csv(path, ModelFamily("poisson"), SimConfig(N=400, r0=50, r_values=()))
    assert res.cells == {}
    assert res.theta_full.shape == (3,)
    res = analyze_csv(path, ModelFamily("poisson"),
                      SimConfig(N=400, r0=40, r_values=(80,), repetitions=2))
    assert ("ELWAI", 80) in res.cells


def test_cli_commands(tmp_path, capsys):
    out = tmp_path / "sim"
    args = ["simulate", "--n", "4000", "--r0", "100", "--r", "200", "--reps", "2", "--out", str(out)]
    assert main(args) == 0
    assert (out / "results.csv").read_text().startswith("estimator,r,metric,value\n")
    assert main(args + ["--r", "5000"]) == 1
    assert main(["samplesize", "--n", "4000", "--r0", "100", "--require", "mse:0.5"]) == 0
    assert main(["compare", "--n", "4000", "--r0", "100", "--reps", "2", "--targets", "200",
                 "400", "--out", str(tmp_path / "cmp")]) == 0
    assert main(["samplesize", "--require", "nonsense"]) == 1


def test_cli_samplesize_json(capsys):
    assert main(["samplesize", "--n", "4000", "--r0", "100", "--requirement", "abserr:0.01,0.05"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["r_second"] == pytest.approx(4000 * (report["n0"] - 100) / 3900)


def test_cli_partial_failure_exit_code(tmp_path, monkeypatch):
    import elwsub.harness as harness
    real = harness.estimate

    def flaky(kind, *args, **kwargs):
        if kind == "ELW":
            raise harness.ELInfeasibleError("forced")
        return real(kind, *args, **kwargs)

    monkeypatch.setattr(harness, "estimate", flaky)
    out = tmp_path / "o"
    code = main(["simulate", "--n", "3000", "--r0", "100", "--r", "200", "--reps", "2",
                 "--out", str(out)])
    assert code == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["failures"]
