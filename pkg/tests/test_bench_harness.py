import json
import math

import numpy as np
import pytest

from stochid import ConfigError, SystemModel, preset
from stochid.bench_harness import (
    ExperimentConfig,
    GridPoint,
    RateReport,
    coverage_experiment,
    derive_seed,
    fit_rate,
    nonzero_mean_experiment,
    read_report_json,
    report_csv,
    report_json,
    run_sweep,
    wishart_coverage,
)
from stochid import (
    align,
    balanced_realization,
    build_batch,
    kalman_recursion,
    realization_errors,
    regress_G,
    simulate,
    true_G,
)

GRID = [250 * 2**i for i in range(7)]


@pytest.mark.parametrize("alpha", [-1.0, -0.5, 0.0])
@pytest.mark.parametrize("scale", [0.3, 1.0, 17.0])
def test_fit_exact_power_law(alpha, scale):
    N = np.array(GRID, dtype=float)
    slope, intercept, r2 = fit_rate(N, scale * N**alpha)
    assert abs(slope - alpha) <= 1e-12
    assert intercept == pytest.approx(math.log(scale), abs=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_derive_seed_pure():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert len({derive_seed(7, i, r) for i in range(5) for r in range(5)}) == 25
    assert derive_seed(7, 1, 2) != derive_seed(8, 1, 2)


def _small(name="scalar-stable", **kw):
    base = dict(model=preset(name), model_name=name, grid=[200, 400, 800, 1600], reps=20, p=2, f=2, seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


def test_sweep_deterministic_and_schedule_free():
    a = run_sweep(_small())
    b = run_sweep(_small())
    c = run_sweep(_small(n_jobs=2))
    assert a.to_dict() == b.to_dict() == c.to_dict()
    assert len(a.per_N) == 4
    assert np.isfinite(a.slope)
    assert all(g.n_ok == 20 and not g.unreliable for g in a.per_N)
    assert run_sweep(_small(seed=12)).slope != a.slope


@pytest.mark.parametrize("metric", ["A_error", "C_error", "K_error"])
def test_sweep_realization_metrics(metric):
    rep = run_sweep(_small(error_metric=metric, grid=[500, 1000, 2000, 4000]))
    assert rep.error_metric == metric
    assert all(g.median_error > 0 for g in rep.per_N)
    assert rep.slope < 0


def test_similarity_invariance():
    model = preset("two-state-stable")
    S = np.array([[2.0, 0.3], [-0.5, 1.1]])
    Si = np.linalg.inv(S)
    moved = SystemModel(A=Si @ model.A @ S, C=model.C @ S, Q=Si @ model.Q @ Si.T, R=model.R,
                        mu=Si @ model.mu, Sigma0=Si @ model.Sigma0 @ Si.T)
    p, f = 4, 3
    G0, _ = true_G(model, kalman_recursion(model, p + f), p, f)
    G1, _ = true_G(moved, kalman_recursion(moved, p + f), p, f)
    np.testing.assert_allclose(G1, G0, atol=1e-8)
    ref0 = balanced_realization(G0, 2, 1, f)
    ref1 = balanced_realization(G1, 2, 1, f)
    batch = build_batch(simulate(model, 2000, p + f, seed=4), p, f)
    G_hat = regress_G(batch)
    est = balanced_realization(G_hat, 2, 1, f)
    assert abs(np.linalg.norm(G_hat - G0, 2) - np.linalg.norm(G_hat - G1, 2)) <= 1e-8
    e0 = realization_errors(est, ref0, align(est.O_hat, ref0.O_hat)).as_dict()
    e1 = realization_errors(est, ref1, align(est.O_hat, ref1.O_hat)).as_dict()
    for k in e0:
        assert e0[k] == pytest.approx(e1[k], abs=1e-8)


@pytest.mark.parametrize("kw", [
    {"grid": [100, 200, 400]},
    {"grid": [100, 400, 200, 800]},
    {"grid": [100, 100, 200, 400]},
    {"reps": 19},
])
def test_sweep_config_rejected(kw):
    with pytest.raises(ConfigError):
        run_sweep(_small(**kw))


@pytest.mark.parametrize("kw", [{"error_metric": "B_error"}, {"delta": 1.0}, {"p": 2, "c": 1.0}, {"f": 0}])
def test_config_construction_rejected(kw):
    with pytest.raises(ConfigError):
        _small(**kw)


def test_config_from_dict_forms():
    cfg = ExperimentConfig.from_dict({"model": "scalar-stable", "p_schedule": 3, "grid": GRID})
    assert cfg.p_for(10_000) == 3
    cfg = ExperimentConfig.from_dict({"model": "scalar-stable", "p_schedule": {"c": 2.0}})
    assert cfg.p_for(1000) == math.ceil(2 * math.log(1000))
    cfg = ExperimentConfig.from_dict({"model": {"A": 0.5, "C": 1, "Q": 1, "R": 1}})
    assert cfg.model.A[0, 0] == 0.5
    assert cfg.p_for(10) >= 2
    cfg = ExperimentConfig.from_dict({"model": "scalar-stable",
                                      "model_overrides": {"mu": [1.0], "Sigma0": [[1.0]]}})
    back = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.model.fingerprint() == cfg.model.fingerprint()
    for bad in ({"grid": GRID}, {"model": "no-such-preset"}, {"model": "scalar-stable", "bogus": 1}):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)


def test_default_schedule_constant():
    cfg = ExperimentConfig(model=preset("scalar-stable"))
    from stochid import steady_state_filter
    rho = steady_state_filter(cfg.model).closed_loop_radius
    assert cfg.schedule_constant() == pytest.approx(2 / math.log(1 / rho))


def test_config_from_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(bad)


def test_nonzero_mean_rejections():
    with pytest.raises(ConfigError):
        nonzero_mean_experiment(_small(model=preset("scalar-unstable", mu=[1.0]), p=None, c=2))
    with pytest.raises(ConfigError):
        nonzero_mean_experiment(_small(p=None, c=2))
    with pytest.raises(ConfigError):
        nonzero_mean_experiment(_small(model=preset("scalar-stable", mu=[1.0])))


def test_nonzero_mean_records_transition_norm():
    cfg = _small(model=preset("scalar-stable", mu=[1.0], Sigma0=[[1.0]]), p=None, c=2)
    rep = nonzero_mean_experiment(cfg)
    norms = [g.transition_norm for g in rep.per_N]
    assert all(a > b > 0 for a, b in zip(norms, norms[1:]))
    assert [g.p for g in rep.per_N] == [math.ceil(2 * math.log(N)) for N in cfg.grid]


@pytest.mark.slow
def test_nonzero_mean_marginal_decreasing():
    model = preset("jordan-marginal", mu=[1.0, 1.0])
    cfg = ExperimentConfig(model=model, c=3, grid=[500 * 2**i for i in range(6)], reps=100, seed=0)
    med = nonzero_mean_experiment(cfg).medians
    assert np.all(np.diff(med) < 0)


def test_coverage_arguments():
    cfg = _small()
    with pytest.raises(ValueError):
        coverage_experiment(cfg, 0)
    with pytest.raises(ConfigError):
        coverage_experiment(cfg, 5, N=40)


def test_coverage_small_run():
    out = coverage_experiment(_small(), 40, N=500)
    assert out["trials"] == 40 and out["failed"] == 0
    assert out["target"] == pytest.approx(0.8)
    assert out["bound_coverage"] >= 0.8
    assert set(out["diagnostics_coverage"]) >= {"noise_floor", "inverse_gram"}
    assert coverage_experiment(_small(), 40, N=500) == out


def test_wishart_coverage_default_N():
    out = wishart_coverage(2, 0.05, 200, seed=3)
    assert out["N"] == math.ceil(16 + 16 * math.log(20))
    assert out["coverage"] >= 0.95
    with pytest.raises(ValueError):
        wishart_coverage(2, 0.05, 0)


def _report():
    pts = [GridPoint(N, 2, 1 / math.sqrt(N), 0.8 / math.sqrt(N), 1.2 / math.sqrt(N), 100, 0, False)
           for N in GRID]
    s, i, r2 = fit_rate(GRID, [g.median_error for g in pts])
    return RateReport(pts, s, i, r2, "G_error", {"model": "scalar-stable"})


def test_report_csv(tmp_path):
    rep = _report()
    path = tmp_path / "r.csv"
    report_csv(rep, path)
    lines = path.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == "N,p,median_error,q25,q75"
    assert len(body) - 1 == 7
    slope_line = next(l for l in comments if l.startswith("# slope:"))
    assert float(slope_line.split(":", 1)[1]) == rep.slope
    first = body[1].split(",")
    assert int(first[0]) == 250 and float(first[2]) == rep.per_N[0].median_error


def test_report_json_roundtrip(tmp_path):
    rep = _report()
    path = tmp_path / "r.json"
    report_json(rep, path)
    back = read_report_json(path)
    assert back.slope == rep.slope and back.intercept == rep.intercept and back.r_squared == rep.r_squared
    assert back.per_N == rep.per_N
