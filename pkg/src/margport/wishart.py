"""Allocation when the covariance matrix carries Wishart noise.

With ``S ~ W(alpha, Sigma/alpha)`` and ``mu ~ N(mu0, Sigma0)`` the expected
CARA utility integrates in closed form. Its log, divided by ``-a``, is the
concave objective::

    mu0'w - a/2 w'Sigma0 w + alpha/(2a) ln(1 - a^2/alpha w'Sigma w)

which is finite only for ``w'Sigma w < alpha / a^2``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._objective import MarginalObjective, solve_marginal
from .core import AllocationResult, PortfolioProblem
from .exceptions import (ConvergenceError, DomainError, MultipleRootsWarning,
                         SingularMatrixError)

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
MAX_FIXED_POINT_ITER = 200


@dataclass(frozen=True)
class WishartAllocProblem:
    problem: PortfolioProblem
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError("alpha must be > 0")

    @property
    def a(self):
        return self.problem.risk_aversion

    @property
    def d_max(self):
        """Upper edge ``alpha / a^2`` of the admissible quadratic risk."""
        return self.alpha / self.a ** 2


@dataclass(frozen=True)
class WishartDiagnostics:
    """``d = w'Sigma w``, ``q = mu0'Sigma^-1 mu0`` and ``g = 1 - a^2 d / alpha``."""

    d: float
    q: float
    g: float
    residual: float = 0.0

    def as_dict(self):
        return {"d": self.d, "q": self.q, "g": self.g, "residual": self.residual}


def _objective(p: WishartAllocProblem) -> MarginalObjective:
    pp = p.problem
    return MarginalObjective(pp.mu0, pp.sigma0, [(None, pp.sigma, p.alpha)], pp.risk_aversion)


def marginalized_objective(p: WishartAllocProblem, w) -> float:
    """Concave marginalized objective (certainty-equivalent units).

    Raises
    ------
    DomainError
        If ``a^2/alpha w'Sigma w >= 1``.
    """
    w = np.asarray(w, dtype=float)
    f = _objective(p).value(w)
    if not np.isfinite(f):
        raise DomainError("w'Sigma w >= alpha/a^2: marginalized utility is -inf")
    return -f


def expected_utility(p: WishartAllocProblem, w, *, log=False) -> float:
    """``E[-exp(-a w'r)] = -exp(-a * objective)``; log-magnitude if ``log``."""
    e = -p.a * marginalized_objective(p, w)
    return e if log else -math.exp(e)


def scaling_g_wishart(q, alpha):
    """Shrinkage of the mean-variance weights, ``(sqrt(alpha(alpha+4q)) - alpha)/(2q)``.

    Evaluated as ``2 / (1 + sqrt(1 + 4q/alpha))``, which is the same number
    without cancellation and equals 1 at ``q = 0``. Independent of ``a``.
    """
    q = np.asarray(q, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(q < 0) or np.any(alpha <= 0):
        raise ValueError("need q >= 0 and alpha > 0")
    g = 2.0 / (1.0 + np.sqrt(1.0 + 4.0 * q / alpha))
    return g if g.ndim else float(g)


def scaling_g_laplace(q):
    """Laplace-noise counterpart ``(sqrt(1 + 2q) - 1)/q = 2/(1 + sqrt(1 + 2q))``."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValueError("need q >= 0")
    g = 2.0 / (1.0 + np.sqrt(1.0 + 2.0 * q))
    return g if g.ndim else float(g)


def _check_sigma(sigma):
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(f"Sigma condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")


def stationarity_residual(p: WishartAllocProblem, w) -> float:
    """Max-norm of ``(mu0 - a Sigma0 w)(1 - a^2/alpha w'Sigma w) - a Sigma w``,
    relative to ``max(|mu0|, 1e-300)``."""
    pp = p.problem
    w = np.asarray(w, dtype=float)
    g = 1.0 - float(w @ pp.sigma @ w) / p.d_max
    r = (pp.mu0 - p.a * (pp.sigma0 @ w)) * g - p.a * (pp.sigma @ w)
    return float(np.max(np.abs(r)) / max(np.max(np.abs(pp.mu0)), 1e-300))


def solve_weights_no_mu_uncertainty(p: WishartAllocProblem):
    """Closed-form optimum ``g_W(q, alpha) Sigma^-1 mu0 / a`` for ``Sigma0 = 0``.

    Returns
    -------
    weights : ndarray
    diagnostics : WishartDiagnostics
    """
    pp = p.problem
    if np.any(pp.sigma0_diag != 0):
        raise ValueError("Sigma0 must be zero; use solve_weights_full")
    _check_sigma(pp.sigma)
    x = np.linalg.solve(pp.sigma, pp.mu0)
    q = float(pp.mu0 @ x)
    g = scaling_g_wishart(q, p.alpha)
    w = g * x / p.a
    d = float(w @ pp.sigma @ w)
    return w, WishartDiagnostics(d, q, g, stationarity_residual(p, w))


def _weights_at(p, gamma):
    """``w(gamma) = (gamma/a)(Sigma + gamma Sigma0)^-1 mu0`` and its gamma-derivative."""
    pp = p.problem
    M = pp.sigma + gamma * pp.sigma0
    w = gamma / p.a * np.linalg.solve(M, pp.mu0)
    dw = np.linalg.solve(M, pp.mu0 / p.a - pp.sigma0 @ w)
    return w, dw


def _fixed_point_residual(p, gamma):
    # F(gamma) = w'Sigma w - d(gamma), d(gamma) = alpha (1 - gamma)/a^2
    w, dw = _weights_at(p, gamma)
    Sw = p.problem.sigma @ w
    return float(w @ Sw) - p.d_max * (1.0 - gamma), 2.0 * float(Sw @ dw) + p.d_max, w


def solve_weights_full(p: WishartAllocProblem, *, scan=64):
    """Optimum under both mean and covariance uncertainty.

    The optimality condition ties the weights to ``g = 1 - a^2 d/alpha``
    through ``w(g) = (g/a)(Sigma + g Sigma0)^-1 mu0``, leaving the scalar
    equation ``w(g)'Sigma w(g) = alpha (1 - g)/a^2`` on ``g in (0, 1]``.
    The residual is negative near ``g = 0`` and nonnegative at ``g = 1``.
    A grid scan brackets the root, then safeguarded Newton refines it.

    Returns
    -------
    weights : ndarray
    diagnostics : WishartDiagnostics

    Raises
    ------
    ConvergenceError
        If the bracket is not resolved within 200 iterations.
    """
    pp = p.problem
    _check_sigma(pp.sigma)
    q = float(pp.mu0 @ np.linalg.solve(pp.sigma, pp.mu0))
    if not np.any(pp.mu0):
        return np.zeros(pp.dim), WishartDiagnostics(0.0, 0.0, 1.0, 0.0)

    grid = np.linspace(0.0, 1.0, scan + 1)
    vals = np.array([-p.d_max] + [_fixed_point_residual(p, g)[0] for g in grid[1:]])
    sign_changes = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if vals[-1] == 0.0:
        lo, hi = 1.0, 1.0
    else:
        if sign_changes.size > 1:
            warnings.warn(f"{sign_changes.size} sign changes in the fixed-point equation; "
                          "using the first", MultipleRootsWarning, stacklevel=2)
        k = int(sign_changes[0])
        lo, hi = grid[k], grid[k + 1]

    gamma = hi
    for _ in range(MAX_FIXED_POINT_ITER):
        F, dF, w = _fixed_point_residual(p, gamma)
        if abs(F) <= 1e-15 * float(w @ pp.sigma @ w) or hi - lo <= 2e-16 * hi:
            break
        if F < 0:
            lo = gamma
        else:
            hi = gamma
        new = gamma - F / dF if dF > 0 else np.nan
        if not lo <= new <= hi:
            new = 0.5 * (lo + hi)
        if new == gamma:
            break
        gamma = new
    else:
        raise ConvergenceError(f"fixed point not found in {MAX_FIXED_POINT_ITER} iterations")
    d = float(w @ pp.sigma @ w)
    return w, WishartDiagnostics(d, q, 1.0 - d / p.d_max, stationarity_residual(p, w))


def solve_weights_constrained(p: WishartAllocProblem, constraints=None, *, tol=1e-10,
                              max_iter=10_000) -> AllocationResult:
    """Maximize the marginalized objective numerically, optionally under constraints.

    Parameters
    ----------
    constraints : ConstraintSet, optional
        Box bounds, budget equality and/or long-only restriction.

    Raises
    ------
    InfeasibleError
        If the constraint set is empty or misses the objective domain.
    ConvergenceError
        If the optimizer does not converge.
    """
    obj = _objective(p)
    w, report = solve_marginal(obj, constraints, tol=tol, max_iter=max_iter)
    d = float(w @ p.problem.sigma @ w)
    diag = {"d": d, "g": 1.0 - d / p.d_max}
    return AllocationResult(w, -report.objective, diag, report)


def allocate(p: WishartAllocProblem, constraints=None, **kw) -> AllocationResult:
    """Dispatch to the closed form, the fixed point or the constrained solver."""
    if constraints is not None and not constraints.is_unconstrained:
        return solve_weights_constrained(p, constraints, **kw)
    if np.any(p.problem.sigma0_diag != 0):
        w, diag = solve_weights_full(p)
    else:
        w, diag = solve_weights_no_mu_uncertainty(p)
    return AllocationResult(w, marginalized_objective(p, w), diag.as_dict())
