import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from margport.exceptions import DomainError, InfeasibleError
from margport.solver import (ConstraintSet, Status, minimize, project_box_budget,
                             project_epigraph, project_simplex)

from conftest import random_spd

vec5 = arrays(float, 5, elements=st.floats(-10, 10))


def quad(A, b):
    return lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b)


def simplex_oracle(x, budget):
    # enumerate supports; the projection on a fixed support is a shift
    best, best_d = None, np.inf
    n = x.shape[0]
    for mask in itertools.product([0, 1], repeat=n):
        s = np.array(mask, bool)
        if not s.any():
            continue
        w = np.zeros(n)
        w[s] = x[s] - (x[s].sum() - budget) / s.sum()
        if np.any(w < -1e-15):
            continue
        d = np.sum((w - x) ** 2)
        if d < best_d:
            best, best_d = w, d
    return best


def test_half_norm_unconstrained():
    x, rep = minimize(lambda x: (0.5 * x @ x, x), [3.0, -4.0, 1e3])
    assert rep.status is Status.CONVERGED
    assert np.max(np.abs(x)) < 1e-9


@pytest.mark.parametrize("with_hess", [True, False])
def test_mv_recovered(with_hess, rng):
    S = random_spd(rng, 6)
    mu = rng.normal(0.05, 0.02, 6)
    a = 2.0
    fun = quad(a * S, mu)
    x, rep = minimize(fun, np.zeros(6), hess=(lambda x: a * S) if with_hess else None, tol=1e-12)
    ref = np.linalg.solve(S, mu) / a
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_quadratic_dim100_iteration_bound(rng):
    S = random_spd(rng, 100, cond=100.0)
    b = rng.standard_normal(100)
    x, rep = minimize(quad(S, b), np.zeros(100))
    assert rep.converged and rep.iterations <= 500


def test_simplex_projection_examples():
    x = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex(x), x)
    np.testing.assert_array_equal(project_simplex(np.array([2.0, 0, 0])), [1.0, 0, 0])


@given(vec5, st.floats(0.1, 5))
def test_simplex_projection_matches_enumeration(x, budget):
    np.testing.assert_allclose(project_simplex(x, budget), simplex_oracle(x, budget), atol=1e-10)


@given(vec5)
def test_box_budget_projection_is_feasible_and_optimal(x):
    lo, hi, b = -0.5, 1.0, 1.0
    w = project_box_budget(x, lo, hi, b)
    assert abs(w.sum() - b) < 1e-12 and w.min() >= lo and w.max() <= hi
    # first-order optimality: x - w = theta on free coordinates
    free = (w > lo + 1e-12) & (w < hi - 1e-12)
    if free.sum() > 1:
        assert np.ptp((x - w)[free]) < 1e-10


@given(vec5, st.floats(-2, 2))
def test_epigraph_projection_feasible(x, s):
    w, t = project_epigraph(x, s, np.zeros(5), np.full(5, np.inf), 1.0)
    assert abs(w.sum() - 1.0) < 1e-10 and w.min() >= 0 and w.max() <= t + 1e-12


def test_constrained_long_only_quadratic():
    A = np.diag([1.0, 2.0, 4.0])
    b = np.array([1.0, -1.0, 0.5])
    x, rep = minimize(quad(A, b), np.zeros(3), constraints=ConstraintSet(nonneg=True))
    np.testing.assert_allclose(x, [1.0, 0.0, 0.125], atol=1e-9)
    assert rep.converged


def test_budget_equality_quadratic():
    A = np.diag([1.0, 2.0])
    cs = ConstraintSet(budget=1.0)
    x, rep = minimize(quad(A, np.zeros(2)), [5.0, 5.0], constraints=cs)
    np.testing.assert_allclose(x, [2 / 3, 1 / 3], atol=1e-9)
    assert cs.violation(x) < 1e-12


def test_descent_domain_safety_and_determinism():
    # log barrier with its optimum near the boundary
    def fun(x):
        m = 1.0 - x @ x
        if m <= 0:
            return np.inf, None
        return -3 * x[0] - np.log(m), np.array([-3.0, 0.0]) + 2 * x / m

    seen = []

    def dom(x):
        seen.append(x.copy())
        return x @ x < 1.0

    x1, r1 = minimize(fun, [0.0, 0.5], domain=dom)
    assert np.all(np.diff(r1.history) <= 1e-14)
    assert r1.converged and x1 @ x1 < 1
    x2, r2 = minimize(fun, [0.0, 0.5], domain=dom)
    np.testing.assert_array_equal(x1, x2)
    assert r1.history == r2.history


def test_errors_and_statuses():
    with pytest.raises(InfeasibleError):
        minimize(lambda x: (x @ x, 2 * x), [0.0, 0.0],
                 constraints=ConstraintSet(upper=0.1, budget=1.0))
    with pytest.raises(DomainError):
        minimize(lambda x: (x @ x, 2 * x), [2.0], domain=lambda x: abs(x[0]) < 1)
    _, rep = minimize(quad(np.diag([1.0, 1e4]), np.ones(2)), [0.0, 0.0], max_iter=2)
    assert rep.status is Status.MAX_ITER
