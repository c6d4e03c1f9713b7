import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from margport.exceptions import IllConditionedWarning, NotPositiveDefiniteError
from margport.montecarlo import simplex_grid_search
from margport.scenario import (StressedCovSpec, TwoStateScenario, build_stressed_cov,
                               low_a_limit_weights, lse_objective, max_state_objective,
                               min_variance_two_state, minimax_portfolio, solve_max_state,
                               solve_two_state, state_exponents)
from margport.solver import ConstraintSet

SN = np.array([[0.0225, 0.005], [0.005, 0.03]])
MUN = np.array([0.06, 0.04])
MUS = np.array([-0.3, -0.2])
SS = build_stressed_cov(StressedCovSpec(0.45, 0.8, 2))


def scen(p=0.9, a=2.0, mu_s=MUS, sigma_s=SS):
    return TwoStateScenario(p, MUN, SN, mu_s, sigma_s, a)


def test_stressed_cov():
    np.testing.assert_allclose(build_stressed_cov(StressedCovSpec(0.3, 0.0, 3)), 0.09 * np.eye(3))
    ev = np.linalg.eigvalsh(build_stressed_cov(StressedCovSpec(0.45, 0.8, 3)))
    np.testing.assert_allclose(ev, 0.2025 * np.array([0.2, 0.2, 2.6]), rtol=1e-12)
    with pytest.warns(IllConditionedWarning):
        build_stressed_cov(StressedCovSpec(0.45, 1 - 1e-12, 3))
    with pytest.raises(NotPositiveDefiniteError):
        build_stressed_cov(StressedCovSpec(0.45, -0.6, 3))


def test_lse_special_cases():
    w = np.array([0.4, 0.3])
    one = scen(p=1.0)
    assert lse_objective(one, w) == state_exponents(one, w)[0]
    same = TwoStateScenario(0.3, MUN, SN, MUN, SN, 2.0)
    u = 0.5 * 4 * w @ SN @ w - 2 * MUN @ w
    assert lse_objective(same, w) == pytest.approx(u, abs=1e-15)
    # large exponents do not overflow
    assert math.isfinite(lse_objective(scen(a=1e4), np.array([50.0, 50.0])))


@given(arrays(float, 2, elements=st.floats(-50, 50)), st.floats(0.01, 0.99))
def test_lse_sandwich(w, p):
    sc = scen(p=p)
    un, us = state_exponents(sc, w)
    f = lse_objective(sc, w)
    assert max(un, us) <= f <= max(un, us) + math.log(2)


@given(arrays(float, 2, elements=st.floats(-5, 5)), arrays(float, 2, elements=st.floats(-5, 5)),
       st.floats(0, 1))
def test_lse_convex(w1, w2, lam):
    sc = scen()
    f = lambda w: lse_objective(sc, w)  # noqa: E731
    assert f(lam * w1 + (1 - lam) * w2) <= lam * f(w1) + (1 - lam) * f(w2) + 1e-12


def test_single_state_limits():
    np.testing.assert_allclose(solve_two_state(scen(p=1.0)).weights,
                               np.linalg.solve(SN, MUN) / 2.0, atol=1e-8)
    np.testing.assert_allclose(solve_two_state(scen(p=0.0)).weights,
                               np.linalg.solve(SS, MUS) / 2.0, atol=1e-8)
    np.testing.assert_allclose(low_a_limit_weights(scen(p=1.0)), np.linalg.solve(SN, MUN) / 2.0)


def test_solution_is_stationary():
    r = solve_two_state(scen())
    assert r.report.converged and r.report.grad_norm < 1e-8
    assert sum(r.diagnostics["state_weights"]) == pytest.approx(1.0)


def test_risk_aversion_only_rescales():
    v = [a * solve_two_state(scen(a=a)).weights for a in (1e-3, 0.5, 2.0, 50.0)]
    for x in v[1:]:
        np.testing.assert_allclose(x, v[0], rtol=1e-10)


def test_low_a_formula_one_dimensional():
    sc = TwoStateScenario(0.9, [0.06], [[0.0225]], [-0.3], [[0.2025]], 1e-3)
    den = 0.9 * 0.0225 + 0.1 * 0.2025 + 0.9 * 0.1 * 0.36 ** 2
    assert den == pytest.approx(0.052164, abs=1e-15)
    assert low_a_limit_weights(sc)[0] == pytest.approx(0.024 / (1e-3 * den), rel=1e-14)


def test_low_a_formula_is_short_horizon_limit():
    # shrinking means and variances together makes the exponents small
    errs = []
    for eps in (1e-1, 1e-2, 1e-3):
        sc = TwoStateScenario(0.9, MUN * eps, SN * eps, MUS * eps, SS * eps, 2.0)
        w, lim = solve_two_state(sc).weights, low_a_limit_weights(sc)
        errs.append(np.linalg.norm(w - lim) / np.linalg.norm(lim))
    assert errs[0] > 5 * errs[1] > 25 * errs[2]
    assert errs[2] < 1e-3


def test_rank_one_term_vanishes_for_equal_means():
    sc = TwoStateScenario(0.7, MUN, SN, MUN, SS, 1.0)
    np.testing.assert_allclose(low_a_limit_weights(sc),
                               np.linalg.solve(0.7 * SN + 0.3 * SS, MUN))


def test_large_a_envelope():
    # non-parallel state means so the max-state minimizer is not zero
    mu_s = np.array([0.01, -0.05])
    for a in (10.0, 100.0, 1000.0):
        sc = scen(a=a, mu_s=mu_s)
        w = solve_two_state(sc).weights
        wm = solve_max_state(sc)
        gap = max_state_objective(sc, w) - max_state_objective(sc, wm)
        assert -1e-12 <= gap <= (math.log(2) + abs(math.log(0.1))) / a


def test_two_state_constrained():
    cs = ConstraintSet.simplex()
    r = solve_two_state(scen(), cs)
    assert cs.violation(r.weights) < 1e-9


def test_min_variance_two_state():
    sd = np.diag([0.01, 0.04, 0.09])
    sc = TwoStateScenario(1.0, np.zeros(3), sd, np.zeros(3), np.eye(3), 1.0)
    iv = 1 / np.diag(sd)
    np.testing.assert_allclose(min_variance_two_state(sc).weights, iv / iv.sum(), atol=1e-9)
    np.testing.assert_allclose(min_variance_two_state(sc, ridge=1e8).weights, np.full(3, 1 / 3),
                               atol=1e-6)
    S3 = build_stressed_cov(StressedCovSpec(0.45, 0.8, 3))
    S1 = np.array([[0.02, 0.004, 0.0], [0.004, 0.05, 0.01], [0.0, 0.01, 0.09]])
    mix = TwoStateScenario(0.5, np.zeros(3), S1, np.zeros(3), S3, 1.0)
    w = min_variance_two_state(mix).weights
    M = 0.5 * S1 + 0.5 * S3

    def f(W):
        return -np.einsum("ki,ij,kj->k", W, M, W)

    f.vectorized = True
    g, _ = simplex_grid_search(f, 3, 1e-3)
    assert np.max(np.abs(g - w)) < 2e-3
    # moving weight toward the stressed regime lowers stressed-regime risk
    risk = [w @ S3 @ w for w in (min_variance_two_state(
        TwoStateScenario(p, np.zeros(3), S1, np.zeros(3), S3, 1.0)).weights
        for p in (1.0, 0.75, 0.5, 0.25, 0.0))]
    assert all(r1 <= r0 + 1e-12 for r0, r1 in zip(risk, risk[1:]))


def test_minimax():
    S = np.diag([0.01, 0.04, 0.09])
    np.testing.assert_allclose(minimax_portfolio(S, 0.0).weights, np.full(3, 1 / 3), atol=1e-9)
    r = minimax_portfolio(S, 10.0)
    assert r.diagnostics["max_weight"] == pytest.approx(r.weights.max())

    def f(W):
        return -(W.max(axis=1) + 5.0 * np.einsum("ki,ij,kj->k", W, S, W))

    f.vectorized = True
    g, _ = simplex_grid_search(f, 3, 1e-3)
    assert np.max(np.abs(g - r.weights)) < 2e-3
    iv = 1 / np.diag(S)
    np.testing.assert_allclose(minimax_portfolio(S, 1e7).weights, iv / iv.sum(), atol=1e-4)
    with pytest.raises(ValueError):
        minimax_portfolio(S, -1.0)
