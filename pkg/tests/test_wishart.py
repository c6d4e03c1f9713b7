import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from margport.core import PortfolioProblem
from margport.exceptions import DomainError, SingularMatrixError
from margport.montecarlo import (MCConfig, WishartCovariance, grid_maximize,
                                 mc_expected_utility, simplex_grid_search)
from margport.solver import ConstraintSet
from margport.wishart import (WishartAllocProblem, allocate, expected_utility,
                              marginalized_objective, scaling_g_laplace, scaling_g_wishart,
                              solve_weights_constrained, solve_weights_full,
                              solve_weights_no_mu_uncertainty, stationarity_residual)

from conftest import random_spd

S2 = np.array([[0.04, 0.02], [0.02, 0.09]])
MU2 = np.array([0.05, 0.03])


def prob(mu=MU2, S=S2, a=2.0, alpha=50.0, s0=None):
    return WishartAllocProblem(PortfolioProblem(mu, S, a, sigma0_diag=s0), alpha)


def test_objective_examples():
    p = prob()
    assert marginalized_objective(p, [0, 0]) == 0.0
    w = np.array([0.3, 0.2])
    big = prob(alpha=1e13)
    mv = MU2 @ w - 1.0 * w @ S2 @ w
    assert marginalized_objective(big, w) == pytest.approx(mv, rel=1e-9)
    with pytest.raises(DomainError):
        marginalized_objective(prob(alpha=1.0), [10.0, 10.0])


def test_objective_concave(rng):
    for dim in (2, 3, 5):
        S = random_spd(rng, dim)
        p = WishartAllocProblem(PortfolioProblem(rng.normal(0.05, 0.02, dim), S, 2.0,
                                                 sigma0_diag=rng.uniform(0, 0.01, dim)), 20.0)
        w0 = 0.3 * np.linalg.solve(S, p.problem.mu0) / 2.0
        h = 1e-4
        H = np.zeros((dim, dim))
        E = np.eye(dim) * h
        f = lambda x: marginalized_objective(p, x)  # noqa: E731
        for i in range(dim):
            for j in range(dim):
                H[i, j] = (f(w0 + E[i] + E[j]) - f(w0 + E[i] - E[j]) - f(w0 - E[i] + E[j])
                           + f(w0 - E[i] - E[j])) / (4 * h * h)
        assert np.linalg.eigvalsh(0.5 * (H + H.T)).max() < 1e-6


def test_scaling_values():
    assert scaling_g_wishart(0.0, 5.0) == 1.0
    assert scaling_g_wishart(1e-12, 5.0) == pytest.approx(1.0, abs=1e-12)
    assert scaling_g_wishart(1.0, 100.0) == pytest.approx(0.9901951359, abs=1e-9)
    assert scaling_g_wishart(10.0, 10.0) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-14)
    assert scaling_g_laplace(0.0) == 1.0
    assert scaling_g_laplace(4.0) == 0.5
    assert scaling_g_laplace(1.5) == pytest.approx(2 / 3, rel=1e-15)


def test_scaling_matches_quadratic_form_of_d():
    # d from the quadratic, g = 1 - a^2 d / alpha
    for q, al, a in ((1.0, 100.0, 2.0), (10.0, 10.0, 0.5), (0.3, 3.0, 7.0)):
        d = al / (2 * a * a * q) * (2 * q + al - math.sqrt(al * (4 * q + al)))
        assert scaling_g_wishart(q, al) == pytest.approx(1 - a * a * d / al, rel=1e-12)


@given(st.floats(1e-4, 100), st.floats(1, 1e4), st.floats(1.01, 10))
def test_scaling_monotone_and_bounded(q, alpha, k):
    g = scaling_g_wishart(q, alpha)
    assert 0 < g <= 1
    assert scaling_g_wishart(q * k, alpha) < g
    assert scaling_g_wishart(q, alpha * k) > g
    assert 0 < scaling_g_laplace(q) <= 1


def test_scaling_against_line_maximizer():
    q, al = 10.0, 10.0
    t, _ = grid_maximize(lambda x: x[0] * q + 0.5 * al * math.log(1 - x[0] ** 2 * q / al)
                         if x[0] ** 2 * q < al else -math.inf, [(0, 1)], 401)
    assert t[0] == pytest.approx(scaling_g_wishart(q, al), abs=1e-8)


def test_closed_form_instance():
    p = prob()
    w, diag = solve_weights_no_mu_uncertainty(p)
    mv = np.linalg.solve(S2, MU2) / 2.0
    q = MU2 @ np.linalg.solve(S2, MU2)
    np.testing.assert_allclose(w, scaling_g_wishart(q, 50.0) * mv, rtol=1e-14)
    assert diag.g == pytest.approx(1 - 4 * diag.d / 50, rel=1e-12)
    assert stationarity_residual(p, w) < 1e-10
    r = solve_weights_constrained(p, None)
    np.testing.assert_allclose(r.weights, w, atol=1e-8)
    assert expected_utility(p, w) == pytest.approx(-math.exp(-2.0 * marginalized_objective(p, w)))


def test_closed_form_edge_cases():
    w, d = solve_weights_no_mu_uncertainty(prob(mu=[0.0, 0.0]))
    assert np.all(w == 0) and d.g == 1.0
    w, _ = solve_weights_no_mu_uncertainty(prob(alpha=1e12))
    mv = np.linalg.solve(S2, MU2) / 2.0
    np.testing.assert_allclose(w, mv, rtol=1e-6)
    with pytest.raises(SingularMatrixError):
        solve_weights_no_mu_uncertainty(prob(S=[[1.0, 1 - 1e-14], [1 - 1e-14, 1.0]]))
    with pytest.raises(ValueError):
        solve_weights_no_mu_uncertainty(prob(s0=[0.01, 0.0]))


@pytest.mark.parametrize("a", [0.5, 1.0, 5.0])
def test_risk_aversion_invariance(a):
    w, d = solve_weights_no_mu_uncertainty(prob(a=a))
    w1, d1 = solve_weights_no_mu_uncertainty(prob(a=1.0))
    assert abs(d.g - d1.g) <= 1e-12
    np.testing.assert_allclose(w / np.linalg.norm(w), w1 / np.linalg.norm(w1), atol=1e-14)


def test_full_fixed_point(rng):
    S = random_spd(rng, 3)
    mu = rng.normal(0.05, 0.02, 3)
    p = WishartAllocProblem(PortfolioProblem(mu, S, 2.0), 30.0)
    np.testing.assert_allclose(solve_weights_full(p)[0], solve_weights_no_mu_uncertainty(p)[0],
                               atol=1e-10)
    s0 = np.array([0.02, 0.001, 0.01])
    ps = WishartAllocProblem(PortfolioProblem(mu, S, 2.0, sigma0_diag=s0), 30.0)
    w, diag = solve_weights_full(ps)
    assert stationarity_residual(ps, w) < 1e-10
    eng = solve_weights_constrained(ps, None, tol=1e-12).weights
    np.testing.assert_allclose(w, eng, atol=1e-7)
    big = WishartAllocProblem(PortfolioProblem(mu, S, 2.0, sigma0_diag=s0), 1e12)
    np.testing.assert_allclose(solve_weights_full(big)[0],
                               np.linalg.solve(S + np.diag(s0), mu) / 2.0, rtol=1e-6)
    # non-uniform sigma0 rotates the allocation away from the MV direction
    mv = np.linalg.solve(S, mu)
    cos = w @ mv / (np.linalg.norm(w) * np.linalg.norm(mv))
    assert math.acos(min(1.0, abs(cos))) > 1e-3


def test_constrained_cases():
    S3 = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.02], [0.0, 0.02, 0.05]])
    mu3 = np.array([0.05, 0.03, 0.04])
    p = prob(mu=mu3, S=S3, alpha=20.0)
    free = allocate(p).weights
    assert np.all(free > 0)
    lo = solve_weights_constrained(p, ConstraintSet(nonneg=True)).weights
    np.testing.assert_allclose(lo, free, atol=1e-8)
    cs = ConstraintSet.simplex()
    r = solve_weights_constrained(p, cs)
    assert cs.violation(r.weights) < 1e-9

    def f(W):
        u = 4.0 / 20.0 * np.einsum("ki,ij,kj->k", W, S3, W)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(u < 1, W @ mu3 + 20.0 / 4.0 * np.log1p(-u), -np.inf)

    f.vectorized = True
    g, _ = simplex_grid_search(f, 3, 1e-3)
    assert np.max(np.abs(g - r.weights)) < 1e-3
    assert marginalized_objective(p, r.weights) >= f(g[None])[0] - 1e-12


def test_mc_cross_check():
    p = prob(s0=[0.004, 0.002])
    w, _ = solve_weights_full(p)
    assert 4 / 50 * w @ S2 @ w <= 0.5
    est, se = mc_expected_utility(p.problem, WishartCovariance(50.0, S2), w,
                                  MCConfig(n_samples=100_000, seed=11))
    assert abs(est - expected_utility(p, w)) < 3 * se
