import json
import math

import numpy as np
import pytest

from stochid import (
    build_batch,
    kalman_recursion,
    preset,
    simulate,
    steady_state_filter,
    true_G,
)
from stochid.finite_sample_bounds import (
    concentration_diagnostics,
    realization_bound,
    sample_thresholds,
    sigma_nG_floor,
    estimation_error_bound,
    weighted_innovation_covariance,
    wishart_floor,
)

from conftest import PRESET_NAMES


def test_sigma_E_scalar_p2(scalar, scalar_kalman):
    S, s = weighted_innovation_covariance(scalar, scalar_kalman, 2)
    np.testing.assert_allclose(S, np.diag([1.0, 2.0]), atol=1e-15)
    assert s == pytest.approx(1.0)


def test_sigma_E_single_block():
    m = preset("two-state-stable")
    kal = kalman_recursion(m, 3)
    S, s = weighted_innovation_covariance(m, kal, 1)
    np.testing.assert_allclose(S, m.C @ m.Sigma0 @ m.C.T + m.R, rtol=1e-14)
    assert s == pytest.approx(S[0, 0])


@pytest.mark.parametrize("name", PRESET_NAMES)
@pytest.mark.parametrize("p", [1, 2, 5, 10, 25])
def test_sigma_E_dominates_output_noise(name, p):
    m = preset(name)
    _, s = weighted_innovation_covariance(m, kalman_recursion(m, p), p)
    assert s >= np.linalg.eigvalsh(m.R)[0] * (1 - 1e-12)


def test_sigma_E_horizon_check(scalar):
    with pytest.raises(ValueError):
        weighted_innovation_covariance(scalar, kalman_recursion(scalar, 3), 5)


def test_thresholds_hand_values(scalar, scalar_kalman):
    N0, N1, N2 = sample_thresholds(scalar, scalar_kalman, 2, 2, 1000, 0.05)
    assert N0 == pytest.approx(16 + 16 * math.log(20), rel=1e-14)
    assert N0 == pytest.approx(63.93, abs=5e-3)
    assert N2 == pytest.approx(8 * math.log(20), rel=1e-14)
    assert N2 == pytest.approx(23.97, abs=5e-3)
    assert N1 == 0.0


def test_threshold_N1_grows_with_N():
    m = preset("scalar-stable", mu=[1.0], Sigma0=[[1.0]])
    kal = kalman_recursion(m, 4)
    n1 = [sample_thresholds(m, kal, 2, 2, N, 0.05)[1] for N in (100, 400)]
    assert n1[0] > 0
    assert n1[1] == pytest.approx(2 * n1[0], rel=1e-12)
    assert sample_thresholds(m, kal, 2, 2, 400, 0.05, mu_nonzero=False)[1] == 0.0


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 1.5])
def test_delta_out_of_range(scalar, scalar_kalman, delta):
    with pytest.raises(ValueError):
        sample_thresholds(scalar, scalar_kalman, 2, 2, 100, delta)
    with pytest.raises(ValueError):
        estimation_error_bound(scalar, scalar_kalman, 2, 2, 100, delta)
    with pytest.raises(ValueError):
        wishart_floor(10, 2, delta, np.random.default_rng(0))


def test_bound_hand_evaluation(scalar, scalar_kalman):
    # Riccati steps from P0 = 0 give R_bar = 1, 2, 2.405, 2.4732...
    P = [0.0, 1.0, 1.405]
    P.append(0.81 * 1.405 + 1 - (0.9 * 1.405) ** 2 / 2.405)
    R_bar4 = P[3] + 1
    assert R_bar4 == pytest.approx(2.4732, abs=1e-4)
    k2 = 0.9 * 1.405 / 2.405
    Tf = (k2 + math.sqrt(k2 * k2 + 4)) / 2  # largest singular value of [[1,0],[k2,1]]
    eps1 = 32 * Tf * 1.0 * R_bar4 * math.sqrt(4 * math.log(9 / 0.05))
    N = 1000
    rep = estimation_error_bound(scalar, scalar_kalman, 2, 2, N, 0.05)
    assert rep.R_bar_max == pytest.approx(R_bar4, rel=1e-12)
    assert rep.sigma_E == pytest.approx(1.0, rel=1e-12)
    assert rep.eps1 == pytest.approx(eps1, rel=1e-8)
    assert rep.bound == pytest.approx(eps1 / math.sqrt(N), rel=1e-8)
    g = math.sqrt(R_bar4) * (math.sqrt(2 * 3) + math.sqrt(2 * math.log(40)))
    assert rep.gamma_p == pytest.approx(g, rel=1e-12)
    assert rep.gamma_f == pytest.approx(g, rel=1e-12)
    assert rep.applicable


def test_bound_zero_mean_scaling(scalar, scalar_kalman):
    for N in (100, 777, 5000):
        a = estimation_error_bound(scalar, scalar_kalman, 3, 2, N, 0.05)
        b = estimation_error_bound(scalar, scalar_kalman, 3, 2, 4 * N, 0.05)
        assert b.bound == pytest.approx(a.bound / 2, rel=1e-14)
        assert a.bound == pytest.approx(a.eps1 / (math.sqrt(N) * a.sigma_E), rel=1e-14)
        assert a.eps2 > 0 and a.eps3 > 0


@pytest.mark.parametrize("mu", [0.0, 1.0])
def test_bound_monotone(mu):
    m = preset("scalar-stable", mu=[mu], Sigma0=[[1.0]])
    kal = kalman_recursion(m, 6)
    Ns = [50, 100, 200, 400, 800, 1600]
    b = [estimation_error_bound(m, kal, 3, 3, N, 0.05).bound for N in Ns]
    assert all(x > y for x, y in zip(b, b[1:]))
    deltas = [0.01, 0.05, 0.1, 0.2, 0.4, 0.8]
    b = [estimation_error_bound(m, kal, 3, 3, 500, d).bound for d in deltas]
    assert all(x > y for x, y in zip(b, b[1:]))


def test_bound_report_json(scalar, scalar_kalman):
    rep = estimation_error_bound(scalar, scalar_kalman, 2, 2, 500, 0.05)
    d = json.loads(rep.to_json())
    for key in ("sigma_E", "R_bar_max", "gamma_p", "gamma_f", "zeta_min", "N0", "N1", "N2",
                "eps1", "eps2", "eps3", "bound", "delta", "applicable"):
        assert d[key] == getattr(rep, key)


def test_bound_horizon_check(scalar):
    with pytest.raises(ValueError):
        estimation_error_bound(scalar, kalman_recursion(scalar, 3), 2, 2, 100, 0.05)


def test_realization_bound_examples(scalar, scalar_kalman):
    G, s = true_G(scalar, scalar_kalman, 2, 2)
    assert s[0] == pytest.approx(math.hypot(1, 0.9) * 0.45, rel=1e-12)
    assert s[0] == pytest.approx(0.6054, abs=1e-4)
    rb = realization_bound(G, 0.1, 1, (1.0, 1.0))
    assert rb.applicable
    assert rb.gate == pytest.approx(s[0] / 4)
    assert rb.rhs_O == pytest.approx(2 * math.sqrt(10 / s[0]) * 0.1, rel=1e-12)
    assert rb.rhs_O == pytest.approx(0.8128, abs=1e-4)
    assert rb.rhs_C == rb.rhs_O == rb.rhs_K
    assert rb.rhs_A == pytest.approx((math.sqrt(s[0]) + 1) * rb.rhs_O)
    zero = realization_bound(G, 0.0, 1, (0.5, 0.7))
    assert zero.applicable
    assert zero.rhs_O == zero.rhs_C == zero.rhs_A == zero.rhs_K == 0.0
    assert zero.sigma_o == 0.5
    assert zero.sigma_upper_floor == 0.7
    off = realization_bound(G, s[0] / 2, 1, (1.0, 1.0))
    assert not off.applicable
    assert math.isnan(off.rhs_O)


def test_sigma_nG_floor_examples(scalar):
    kal = kalman_recursion(scalar, 32)
    steady = steady_state_filter(scalar)
    sig, floor, ok = sigma_nG_floor(scalar, kal, steady, 30, 2, 1)
    assert ok and sig >= floor > 0
    with pytest.raises(ValueError):
        sigma_nG_floor(scalar, kal, steady, 30, 2, 30)
    with pytest.raises(ValueError):
        sigma_nG_floor(scalar, kal, steady, 30, 2, 0)


@pytest.mark.parametrize("name", PRESET_NAMES)
@pytest.mark.parametrize("p", [20, 40])
def test_sigma_nG_floor_presets(name, p):
    m = preset(name)
    f = m.n + 1
    kal = kalman_recursion(m, p + f)
    assert sigma_nG_floor(m, kal, steady_state_filter(m), p, f, m.n)[2]


def test_diagnostics_zero_mean_cross_terms(scalar, scalar_kalman):
    batch = build_batch(simulate(scalar, 200, 4, seed=3), 2, 2)
    d = concentration_diagnostics(batch, scalar, scalar_kalman, 0.05)
    assert set(d) == {"noise_floor", "cross_past", "cross_future", "noise_product", "inverse_gram"}
    for key in ("cross_past", "cross_future"):
        assert d[key] == {"empirical": 0.0, "bound": 0.0, "holds": True}


def test_diagnostics_singular_gram(scalar, scalar_kalman):
    y = np.zeros((10, 4, 1))
    y[:, 2:] = 1.0
    d = concentration_diagnostics(build_batch(y, 2, 2), scalar, scalar_kalman, 0.05)
    assert d["inverse_gram"]["holds"] is False
    assert "noise_floor" in d


def test_diagnostics_coverage(scalar, scalar_kalman):
    hits = {"noise_floor": 0, "inverse_gram": 0}
    trials = 500
    for seed in range(trials):
        d = concentration_diagnostics(build_batch(simulate(scalar, 200, 4, seed=seed), 2, 2),
                                      scalar, scalar_kalman, 0.05)
        for k in hits:
            hits[k] += d[k]["holds"]
    assert hits["noise_floor"] / trials >= 0.95
    assert hits["inverse_gram"] / trials >= 0.90


def test_diagnostics_nonzero_mean_bounds_positive():
    m = preset("scalar-stable", mu=[1.0], Sigma0=[[1.0]])
    kal = kalman_recursion(m, 4)
    d = concentration_diagnostics(build_batch(simulate(m, 300, 4, seed=1), 2, 2), m, kal, 0.05)
    assert d["cross_past"]["bound"] > 0
    assert d["cross_past"]["empirical"] > 0


def test_wishart_floor():
    rng = np.random.default_rng(5)
    N = math.ceil(16 + 16 * math.log(20))
    hits = sum(wishart_floor(N, 2, 0.05, rng)[2] for _ in range(1000))
    assert hits >= 950
    emp, floor, _ = wishart_floor(N, 2, 0.05, rng)
    assert floor == pytest.approx(math.sqrt(N) - math.sqrt(2) - math.sqrt(2 * math.log(20)))
