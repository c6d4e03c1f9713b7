"""Normal/stressed two-state allocation and the minimax worst-case portfolio.

With probability ``p`` returns are ``N(mu_n, Sigma_n)`` and otherwise
``N(mu_s, Sigma_s)``. The expected CARA utility is ``-(p e^{u_n'} + (1-p) e^{u_s'})``
so the optimal weights minimize the log-sum-exp of the state exponents::

    u_k = log p_k + a^2/2 w'Sigma_k w - a mu_k'w

Every ``u_k`` depends on ``w`` only through ``v = a w``; the solver works in
``v`` and divides by ``a`` at the end.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import AllocationResult, check_cov, check_vector
from .exceptions import (ConvergenceError, IllConditionedWarning, NotPositiveDefiniteError,
                         SingularMatrixError)
from .solver import ConstraintSet, Status, minimize

COND_WARN = 1e10


@dataclass(frozen=True)
class StressedCovSpec:
    """Equivariant, equicorrelated stressed covariance ``s^2((1-rho) I + rho 11')``."""

    sigma_s: float
    rho_s: float
    dim: int

    def __post_init__(self):
        if not self.sigma_s > 0:
            raise ValueError("sigma_s must be > 0")
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")


def build_stressed_cov(spec: StressedCovSpec) -> np.ndarray:
    """Stressed covariance matrix, with its positive definiteness checked exactly.

    The spectrum is ``s^2 (1 + (N-1) rho)`` once and ``s^2 (1 - rho)`` with
    multiplicity ``N - 1``. A condition number above 1e10 triggers
    :class:`IllConditionedWarning`.
    """
    n, rho, s2 = int(spec.dim), float(spec.rho_s), spec.sigma_s ** 2
    lam = [s2 * (1.0 + (n - 1) * rho)] + ([s2 * (1.0 - rho)] if n > 1 else [])
    if min(lam) <= 0:
        raise NotPositiveDefiniteError(
            f"rho_s = {rho} outside the positive definite range for dim {n}",
            min_eigenvalue=min(lam))
    cond = max(lam) / min(lam)
    if cond > COND_WARN:
        warnings.warn(f"stressed covariance condition number {cond:.3g}", IllConditionedWarning,
                      stacklevel=2)
    return s2 * ((1.0 - rho) * np.eye(n) + rho * np.ones((n, n)))


@dataclass(frozen=True)
class TwoStateScenario:
    p: float
    mu_n: np.ndarray
    sigma_n: np.ndarray
    mu_s: np.ndarray
    sigma_s: np.ndarray
    risk_aversion: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        mu_n = check_vector(self.mu_n, "mu_n")
        n = mu_n.shape[0]
        mu_s = check_vector(self.mu_s, "mu_s", n)
        sn, ss = check_cov(self.sigma_n, "sigma_n"), check_cov(self.sigma_s, "sigma_s")
        if sn.shape[0] != n or ss.shape[0] != n:
            raise ValueError("covariance dimensions do not match the return vectors")
        if not self.risk_aversion > 0:
            raise ValueError("risk_aversion must be > 0")
        for k, v in (("mu_n", mu_n), ("mu_s", mu_s), ("sigma_n", sn), ("sigma_s", ss)):
            object.__setattr__(self, k, v)

    @property
    def dim(self):
        return self.mu_n.shape[0]

    def states(self):
        """``(log_prob, mu, sigma)`` of each state with nonzero probability."""
        out = []
        if self.p > 0:
            out.append((math.log(self.p), self.mu_n, self.sigma_n))
        if self.p < 1:
            out.append((math.log1p(-self.p), self.mu_s, self.sigma_s))
        return out


def _exponents(states, v):
    return np.array([lp + 0.5 * float(v @ S @ v) - float(m @ v) for lp, m, S in states])


def _lse(u):
    m = float(np.max(u))
    return m + math.log(float(np.sum(np.exp(u - m))))


def lse_objective(sc: TwoStateScenario, w) -> float:
    """``log(exp(u_n) + exp(u_s))`` via the max shift; a zero-probability state is dropped."""
    w = check_vector(w, "w", sc.dim)
    return _lse(_exponents(sc.states(), sc.risk_aversion * w))


def state_exponents(sc: TwoStateScenario, w):
    """``(u_n, u_s)``, with ``-inf`` for a state of zero probability."""
    v = sc.risk_aversion * check_vector(w, "w", sc.dim)
    # same arithmetic as lse_objective so the max{u} <= LSE bound holds bitwise
    u = iter(_exponents(sc.states(), v).tolist())
    return (next(u) if sc.p > 0 else -math.inf, next(u) if sc.p < 1 else -math.inf)


def _scaled_lse(states):
    def fun(v):
        u = _exponents(states, v)
        pi = np.exp(u - np.max(u))
        pi /= pi.sum()
        g = sum(p * (S @ v - m) for p, (_, m, S) in zip(pi, states))
        return _lse(u), g

    def hess(v):
        u = _exponents(states, v)
        pi = np.exp(u - np.max(u))
        pi /= pi.sum()
        gs = [S @ v - m for _, m, S in states]
        gbar = sum(p * gk for p, gk in zip(pi, gs))
        H = sum(p * (S + np.outer(gk, gk)) for p, gk, (_, _, S) in zip(pi, gs, states))
        return H - np.outer(gbar, gbar)

    return fun, hess


def _scale_constraints(cs, a):
    if cs is None or cs.is_unconstrained:
        return None
    if cs.epigraph:
        raise ValueError("epigraph constraints are not supported here")
    sc = (lambda x: None if x is None else a * np.asarray(x, dtype=float))
    return ConstraintSet(sc(cs.lower), sc(cs.upper),
                         None if cs.budget is None else a * cs.budget, cs.nonneg)


def solve_two_state(sc: TwoStateScenario, constraints=None, *, tol=1e-12,
                    max_iter=10_000) -> AllocationResult:
    """Minimize the log-sum-exp objective (Newton with the exact Hessian).

    Raises
    ------
    ConvergenceError
        If the solver does not converge.
    """
    a = sc.risk_aversion
    states = sc.states()
    fun, hess = _scaled_lse(states)
    cs = _scale_constraints(constraints, a)
    # start from the first-order (small-exponent) solution
    try:
        v0 = a * low_a_limit_weights(sc)
    except SingularMatrixError:
        v0 = np.zeros(sc.dim)
    if cs is not None:
        cs.check_feasible(sc.dim)
        v0 = cs.project(v0)
    v, report = minimize(fun, v0, hess=hess, constraints=cs, tol=tol, max_iter=max_iter)
    if report.status is not Status.CONVERGED:
        raise ConvergenceError(f"two-state solve stopped with status {report.status.value}")
    w = v / a
    u = _exponents(states, v)
    pi = np.exp(u - np.max(u))
    return AllocationResult(w, report.objective, {"state_weights": (pi / pi.sum()).tolist()},
                            report)


def low_a_limit_weights(sc: TwoStateScenario) -> np.ndarray:
    """First-order solution ``(1/a) Sigma~^-1 mu~`` of the mixture moments.

    ``mu~ = p mu_n + (1-p) mu_s`` and
    ``Sigma~ = p Sigma_n + (1-p) Sigma_s + p(1-p)(mu_n - mu_s)(mu_n - mu_s)'``.
    """
    p = sc.p
    d = sc.mu_n - sc.mu_s
    mu = p * sc.mu_n + (1.0 - p) * sc.mu_s
    S = p * sc.sigma_n + (1.0 - p) * sc.sigma_s + p * (1.0 - p) * np.outer(d, d)
    if np.linalg.cond(S) > 1e12:
        raise SingularMatrixError("mixture covariance is singular")
    return np.linalg.solve(S, mu) / sc.risk_aversion


def max_state_objective(sc: TwoStateScenario, w) -> float:
    """``max_k (a/2 w'Sigma_k w - mu_k'w)`` over states with nonzero probability."""
    w = check_vector(w, "w", sc.dim)
    a = sc.risk_aversion
    return max(0.5 * a * float(w @ S @ w) - float(m @ w) for _, m, S in sc.states())


def solve_max_state(sc: TwoStateScenario, *, tol=1e-14) -> np.ndarray:
    """Unconstrained minimizer of :func:`max_state_objective`.

    Uses the concave dual ``h(lam) = min_w lam f_n + (1-lam) f_s``: its
    derivative ``f_n(w_lam) - f_s(w_lam)`` is nonincreasing in ``lam`` and
    ``w_lam = (a Sigma_lam)^-1 mu_lam`` in closed form.
    """
    a = sc.risk_aversion
    states = sc.states()
    if len(states) == 1:
        _, m, S = states[0]
        return np.linalg.solve(S, m) / a

    def w_at(lam):
        S = lam * sc.sigma_n + (1 - lam) * sc.sigma_s
        return np.linalg.solve(S, lam * sc.mu_n + (1 - lam) * sc.mu_s) / a

    def gap(lam):
        w = w_at(lam)
        fn = 0.5 * a * float(w @ sc.sigma_n @ w) - float(sc.mu_n @ w)
        fs = 0.5 * a * float(w @ sc.sigma_s @ w) - float(sc.mu_s @ w)
        return fn - fs

    if gap(0.0) <= 0:
        return w_at(0.0)
    if gap(1.0) >= 0:
        return w_at(1.0)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return w_at(0.5 * (lo + hi))


def min_variance_two_state(sc: TwoStateScenario, ridge=0.0, *, tol=1e-12) -> AllocationResult:
    """Long-only fully invested minimizer of ``w'(p Sigma_n + (1-p) Sigma_s)w + c w'w``."""
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    M = sc.p * sc.sigma_n + (1.0 - sc.p) * sc.sigma_s + ridge * np.eye(sc.dim)
    H = 2.0 * M

    def fun(w):
        Mw = M @ w
        return float(w @ Mw), 2.0 * Mw

    cs = ConstraintSet.simplex()
    w, report = minimize(fun, np.full(sc.dim, 1.0 / sc.dim), hess=lambda w: H, constraints=cs,
                         tol=tol)
    if report.status is not Status.CONVERGED:
        raise ConvergenceError(f"min-variance solve stopped with status {report.status.value}")
    return AllocationResult(w, report.objective, {}, report)


def minimax_portfolio(sigma, b, *, tol=1e-12, max_iter=10_000) -> AllocationResult:
    """Long-only minimizer of ``max_i w_i + (b/2) w'Sigma w`` with ``sum(w) = 1``.

    Solved over ``(w, t)`` with ``w_i <= t`` and the smooth objective
    ``t + (b/2) w'Sigma w``.
    """
    S = check_cov(sigma)
    if not b >= 0:
        raise ValueError("b must be >= 0")
    n = S.shape[0]
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = b * S

    def fun(x):
        w = x[:n]
        Sw = S @ w
        return x[n] + 0.5 * b * float(w @ Sw), np.append(b * Sw, 1.0)

    cs = ConstraintSet(budget=1.0, nonneg=True, epigraph=1)
    x0 = np.append(np.full(n, 1.0 / n), 1.0 / n)
    x, report = minimize(fun, x0, hess=lambda x: H, constraints=cs, tol=tol, max_iter=max_iter)
    if report.status is not Status.CONVERGED:
        raise ConvergenceError(f"minimax solve stopped with status {report.status.value}")
    w = x[:n]
    return AllocationResult(w, report.objective, {"max_weight": float(w.max())}, report)
