import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from margport.exceptions import DomainError
from margport.montecarlo import grid_maximize
from margport.univariate import (Regime, UnivariateProblem, asymptotic_weight, cubic_real_roots,
                                 cubic_residual, marginal_expected_utility, solve_cubic)

BASE = dict(mu0=0.05, sigma_sq=0.0225, alpha=100.0, risk_aversion=1.0, sigma_min_sq=0.01,
            sigma0_sq=0.0025)

problems = st.builds(
    UnivariateProblem,
    mu0=st.floats(-0.3, 0.3), sigma_sq=st.floats(1e-3, 0.2), alpha=st.floats(0.5, 1e4),
    risk_aversion=st.floats(0.2, 10), sigma_min_sq=st.floats(0, 0.05),
    sigma0_sq=st.floats(0, 0.05))


def w_star(**kw):
    return solve_cubic(UnivariateProblem(**{**BASE, **kw})).weights[0]


def test_objective_examples():
    p = UnivariateProblem(**BASE)
    assert marginal_expected_utility(p, 0.0) == 0.0
    g = UnivariateProblem(0.05, 0.0225, 1e12, 1.0)
    assert marginal_expected_utility(g, 1.3) == pytest.approx(0.5 * 0.0225 * 1.69 - 0.05 * 1.3,
                                                              rel=1e-9)
    with pytest.raises(DomainError):
        marginal_expected_utility(p, p.w_max)


def test_worked_instance():
    p = UnivariateProblem(**BASE)
    w = solve_cubic(p).weights[0]
    corr = 0.05 / 0.035 - w
    assert 0 < corr and corr == pytest.approx(4.2e-4, rel=0.01)
    x, _ = grid_maximize(lambda v: -marginal_expected_utility(p, v[0]),
                         [(-0.99 * p.w_max, 0.99 * p.w_max)], 2001)
    assert abs(x[0] - w) < 1e-8


def test_zero_mean_and_degenerate_branch():
    assert w_star(mu0=0.0) == 0.0
    p = UnivariateProblem(0.05, 0.0225, 10.0, 1.0)
    r = solve_cubic(p)
    assert r.diagnostics["branch"] == "quadratic"
    # one-dimensional closed form g_W * mu/(a sigma^2)
    q = 0.05 ** 2 / 0.0225
    g = (math.sqrt(10 * (10 + 4 * q)) - 10) / (2 * q)
    assert r.weights[0] == pytest.approx(g * 0.05 / 0.0225, rel=1e-12)
    assert r.weights[0] == pytest.approx(asymptotic_weight(p, "sigma0_small"), rel=1e-12)


def test_cubic_roots_helper():
    np.testing.assert_allclose(sorted(cubic_real_roots(1, -6, 11, -6)), [1, 2, 3], atol=1e-12)
    assert len(cubic_real_roots(1, 0, 1, 0)) == 1


@given(problems)
def test_solution_properties(p):
    # below this the weight itself underflows
    assume(abs(p.mu0) > 1e-300)
    r = solve_cubic(p)
    w = r.weights[0]
    assert abs(w) < p.w_max
    assert np.sign(w) == np.sign(p.mu0)
    assert cubic_residual(p, w) < 1e-10
    h = 1e-6 * p.w_max
    f = marginal_expected_utility(p, w)
    for d in (-h, h):
        if abs(w + d) < p.w_max:
            assert marginal_expected_utility(p, w + d) >= f - 1e-15 * max(1, abs(f))


@given(problems, st.floats(1.1, 10))
def test_monotone_in_alpha_and_variances(p, k):
    assume(p.mu0 > 1e-3)
    w = solve_cubic(p).weights[0]
    more_alpha = UnivariateProblem(p.mu0, p.sigma_sq, p.alpha * k, p.risk_aversion,
                                   p.sigma_min_sq, p.sigma0_sq)
    assert solve_cubic(more_alpha).weights[0] >= w * (1 - 1e-12)
    for field in ("sigma_sq", "sigma_min_sq", "sigma0_sq"):
        kw = dict(mu0=p.mu0, sigma_sq=p.sigma_sq, alpha=p.alpha, risk_aversion=p.risk_aversion,
                  sigma_min_sq=p.sigma_min_sq, sigma0_sq=p.sigma0_sq)
        kw[field] = kw[field] * k + 1e-4
        assert solve_cubic(UnivariateProblem(**kw)).weights[0] <= w * (1 + 1e-12)


def test_mu_small_order():
    res = []
    for mu in (0.04, 0.02, 0.01, 0.005):
        p = UnivariateProblem(**{**BASE, "mu0": mu, "alpha": 10.0})
        res.append(abs(solve_cubic(p).weights[0] - asymptotic_weight(p, Regime.MU_SMALL)))
    assert all(r0 / r1 >= 8 for r0, r1 in zip(res, res[1:]))


def test_alpha_large_order():
    res = []
    for al in (10.0, 100.0, 1000.0):
        p = UnivariateProblem(**{**BASE, "alpha": al})
        res.append(abs(solve_cubic(p).weights[0] - asymptotic_weight(p, "alpha_large")))
    assert res[0] > res[1] > res[2]


def test_asymptotic_reference_values():
    p = UnivariateProblem(0.05, 0.0225, 0.01, 1.0)
    assert asymptotic_weight(p, "alpha_small") == pytest.approx(
        math.sqrt(0.01) / 0.15 - 0.01 / (2 * 0.05))
    assert math.sqrt(0.01) / 0.15 == pytest.approx(0.6667, abs=1e-4)
    p = UnivariateProblem(0.05, 0.0225, 10.0, 1.0, 0.0, 1.0)
    lead = 0.05 / 1.0
    assert lead == 0.05
    assert asymptotic_weight(p, "sigma0_large") == pytest.approx(lead - 0.05 * 0.0225)
    p = UnivariateProblem(0.05, 0.0225, 10.0, 2.0)
    s = 0.15
    assert asymptotic_weight(p, "sigma0_small") == pytest.approx(
        (-s * 10 + math.sqrt(10 * (4 * 0.05 ** 2 + 0.0225 * 10))) / (2 * 2 * 0.05 * s))


def test_mu_large_approaches_boundary():
    gaps = []
    for mu in (1.0, 2.0, 4.0, 8.0):
        p = UnivariateProblem(mu, 0.0225, 10.0, 1.0, 0.01)
        gaps.append(abs(solve_cubic(p).weights[0] - asymptotic_weight(p, "mu_large")))
    assert gaps[-1] < gaps[0]


def test_rejects_invalid():
    with pytest.raises(ValueError):
        UnivariateProblem(0.05, 0.0, 10.0, 1.0)
    with pytest.raises(ValueError):
        UnivariateProblem(0.05, 0.02, 10.0, 1.0, sigma_min_sq=-1.0)


@pytest.mark.parametrize("s0", [1e-14, 1e-10, 1e-6, 1e-4])
def test_near_degenerate_leading_coefficient(s0):
    p = UnivariateProblem(0.25, 0.125, 1.0, 1.0, 0.0, s0)
    r = solve_cubic(p)
    w = r.weights[0]
    assert cubic_residual(p, w) < 1e-10
    x, _ = grid_maximize(lambda v: -marginal_expected_utility(p, v[0]),
                         [(0, 0.999 * p.w_max)], 2001)
    assert abs(x[0] - w) < 1e-8


@pytest.mark.parametrize("mu0", [5e-324, -1e-300, 1e-12])
def test_tiny_mean_uses_expansion(mu0):
    p = UnivariateProblem(mu0, 0.125, 0.5, 0.5)
    r = solve_cubic(p)
    assert r.diagnostics["branch"] == "small-mean"
    assert r.weights[0] == pytest.approx(mu0 / (0.5 * 0.125), rel=1e-15)
