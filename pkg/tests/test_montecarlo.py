import math

import numpy as np
import pytest

from margport.core import PortfolioProblem, gaussian_expected_utility
from margport.distributions import ShiftedGammaNoise
from margport.exceptions import DivergenceWarning
from margport.montecarlo import (BlockGamma, FixedCovariance, MCConfig, ScaledCorrelation,
                                 WishartCovariance, grid_maximize, mc_expected_utility,
                                 mc_two_state_utility, simplex_grid_search, utility_samples)
from margport.scenario import TwoStateScenario, lse_objective
from margport.validation import run_validation

S2 = np.array([[0.04, 0.01], [0.01, 0.09]])
PP = PortfolioProblem([0.05, 0.03], S2, 2.0, sigma0_diag=[0.004, 0.002])
W = np.array([0.8, 0.3])


def z(est, se, ref):
    return (est - ref) / se


def test_zero_noise_proxy():
    est, se = mc_expected_utility(PP, WishartCovariance(1e12, S2), W, MCConfig(seed=3))
    flat = PP.replace(sigma=S2 + PP.sigma0, sigma0_diag=None)
    assert abs(z(est, se, gaussian_expected_utility(flat, W))) < 3


def test_fixed_covariance_mean_noise_only():
    est, se = mc_expected_utility(PP, FixedCovariance(S2), W, MCConfig(seed=4))
    flat = PP.replace(sigma=S2 + PP.sigma0, sigma0_diag=None)
    assert abs(z(est, se, gaussian_expected_utility(flat, W))) < 3


def test_two_state_mixture():
    sc = TwoStateScenario(0.8, [0.06, 0.04], [[0.0225, 0.005], [0.005, 0.03]], [-0.2, -0.1],
                          [[0.1, 0.08], [0.08, 0.1]], 2.0)
    w = np.array([0.5, 0.4])
    est, se = mc_two_state_utility(sc, w, MCConfig(seed=5))
    assert abs(z(est, se, -math.exp(lse_objective(sc, w)))) < 3


def test_se_scaling():
    noise = WishartCovariance(20.0, S2)
    se = [mc_expected_utility(PP, noise, W, MCConfig(n_samples=n, seed=8))[1]
          for n in (10_000, 40_000)]
    assert se[0] / se[1] == pytest.approx(2.0, rel=0.2)


def test_rao_blackwell_beats_naive():
    noise = WishartCovariance(20.0, S2)
    rb = utility_samples(PP, noise, W, MCConfig(n_samples=50_000, seed=9))
    nv = utility_samples(PP, noise, W, MCConfig(n_samples=50_000, seed=9, method="naive"))
    assert rb.var() < nv.var()
    # both estimate the same quantity
    se = math.sqrt(rb.var() / rb.size + nv.var() / nv.size)
    assert abs(rb.mean() - nv.mean()) < 3 * se


def test_antithetic():
    noise = FixedCovariance(S2)
    plain = mc_expected_utility(PP, noise, W, MCConfig(n_samples=20_000, seed=1))
    anti = mc_expected_utility(PP, noise, W, MCConfig(n_samples=20_000, seed=1, antithetic=True))
    assert anti[1] < plain[1]
    with pytest.raises(ValueError):
        MCConfig(n_samples=1001, antithetic=True)


def test_deterministic_and_thread_independent():
    noise = BlockGamma([([0], np.eye(1), ShiftedGammaNoise(10.0, 0.02, 0.01)),
                        ([1], np.eye(1), ShiftedGammaNoise(20.0, 0.05, 0.0))])
    a = utility_samples(PP, noise, W, MCConfig(n_samples=30_000, seed=2))
    b = utility_samples(PP, noise, W, MCConfig(n_samples=30_000, seed=2, n_jobs=4))
    assert a.tobytes() == b.tobytes()


def test_divergence_warning():
    noise = ScaledCorrelation(ShiftedGammaNoise(2.0, 0.04, 0.0), np.eye(2))
    with pytest.warns(DivergenceWarning):
        mc_expected_utility(PP, noise, np.array([10.0, 10.0]), MCConfig(n_samples=1000))


def test_grid_maximize():
    x, v = grid_maximize(lambda t: -(t[0] - 0.3) ** 2, [(-1, 1)], 201)
    assert abs(x[0] - 0.3) < 1e-8
    x, _ = grid_maximize(lambda t: -(t[0] - 0.1) ** 2 - 2 * (t[1] + 0.2) ** 2 - t[0] * t[1],
                         [(-1, 1), (-1, 1)], 101)
    ref = np.linalg.solve([[2, 1], [1, 4]], [0.2, -0.8])
    np.testing.assert_allclose(x, ref, atol=1e-7)
    with pytest.raises(ValueError):
        grid_maximize(lambda t: 0.0, [(0, 1)] * 4)


def test_simplex_grid():
    g, _ = simplex_grid_search(lambda w: -np.sum((w - [0.2, 0.5, 0.3]) ** 2), 3, 1e-2)
    np.testing.assert_allclose(g, [0.2, 0.5, 0.3], atol=1e-12)


def test_validation_suite_default_and_mutation():
    rows = run_validation()
    assert all(r.passed for r in rows), [r.row() for r in rows if not r.passed]
    bad = {r.check: r for r in run_validation(g_bias=0.01)}
    assert abs(bad["wishart_scaling_stationarity"].z_score) > 3
    bad = {r.check: r for r in run_validation(g_bias=-0.01)}
    assert abs(bad["wishart_scaling_stationarity"].z_score) > 3


def test_validation_se_scales_with_samples():
    small = {r.check: r for r in run_validation(n_samples=1000)}
    big = {r.check: r for r in run_validation(n_samples=100_000)}
    for name, r in big.items():
        if not math.isnan(r.mc_se):
            assert small[name].mc_se / r.mc_se == pytest.approx(10.0, rel=0.35)
