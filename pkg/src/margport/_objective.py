"""Negated marginalized CARA objectives shared by the Wishart and block models."""

from __future__ import annotations

import numpy as np

from .exceptions import ConvergenceError, DomainError, InfeasibleError
from .solver import ConstraintSet, Status, minimize


class MarginalObjective:
    """``F(w) = -mu'w + a/2 w'Qw - sum_k alpha_k/(2a) ln(1 - a^2/alpha_k w_k'A_k w_k)``.

    ``terms`` is a list of ``(idx, A, alpha)``; ``idx`` selects the
    coordinates ``w_k`` of the term (``None`` for all of them). Minimizing
    ``F`` maximizes the marginalized expected utility. ``F`` is convex, and
    finite only where every log argument is positive.
    """

    def __init__(self, mu, Q, terms, a):
        self.mu = np.asarray(mu, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self.a = float(a)
        self.n = self.mu.shape[0]
        self.terms = []
        for idx, A, alpha in terms:
            idx = np.arange(self.n) if idx is None else np.asarray(idx)
            self.terms.append((idx, np.asarray(A, dtype=float), float(alpha)))

    def usage(self, w):
        """``a^2/alpha_k w_k'A_k w_k``, one per term; the domain is ``usage < 1``."""
        a2 = self.a * self.a
        return np.array([a2 / al * float(w[i] @ A @ w[i]) for i, A, al in self.terms])

    def margins(self, w):
        """Log arguments ``1 - usage``."""
        return 1.0 - self.usage(w)

    def domain(self, w):
        return bool(np.all(self.margins(w) > 0))

    def value(self, w):
        w = np.asarray(w, dtype=float)
        u = self.usage(w)
        if np.any(u >= 1.0):
            return np.inf
        a = self.a
        # log1p keeps the barrier exact when alpha is huge and usage tiny
        logs = sum(al / (2.0 * a) * np.log1p(-uk) for (_, _, al), uk in zip(self.terms, u))
        return float(-self.mu @ w + 0.5 * a * (w @ self.Q @ w) - logs)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        f = self.value(w)
        if not np.isfinite(f):
            return np.inf, np.full_like(w, np.nan)
        a = self.a
        g = -self.mu + a * (self.Q @ w)
        for (idx, A, al), mk in zip(self.terms, self.margins(w)):
            g[idx] += a * (A @ w[idx]) / mk
        return f, g

    def hess(self, w):
        w = np.asarray(w, dtype=float)
        a = self.a
        H = a * self.Q.copy()
        for (idx, A, al), mk in zip(self.terms, self.margins(w)):
            Aw = A @ w[idx]
            H[np.ix_(idx, idx)] += (a / mk) * A + (2.0 * a ** 3 / (al * mk * mk)) * np.outer(Aw, Aw)
        return H

    def curvature(self):
        """Hessian at ``w = 0``: ``a (Q + sum_k A_k)``."""
        H = self.a * self.Q.copy()
        for idx, A, _ in self.terms:
            H[np.ix_(idx, idx)] += self.a * A
        return H


def shrink_into_domain(obj: MarginalObjective, w, margin=0.5):
    """Scale ``w`` toward 0 until every log argument is at least ``margin``."""
    w = np.asarray(w, dtype=float)
    m = obj.margins(w)
    # 1 - margin_k is quadratic in w, so one rescale suffices
    used = float(np.max(1.0 - m)) if m.size else 0.0
    if used <= 1.0 - margin:
        return w
    return w * np.sqrt((1.0 - margin) / used)


def solve_marginal(obj: MarginalObjective, constraints=None, *, tol=1e-10, max_iter=10_000,
                   x0=None):
    """Minimize ``obj`` (with optional constraints) from a safe starting point.

    The default start is half the mean-variance solution of the quadratic
    approximation, shrunk so every log argument is at least 1/2. Under
    constraints the start is projected; if that leaves the domain, the
    projected origin and the uniform budget allocation are tried.

    Raises
    ------
    InfeasibleError
        If no feasible starting point lies inside the objective domain.
    ConvergenceError
        If the solver does not report convergence.
    """
    cs = constraints if constraints is not None else ConstraintSet()
    if x0 is None:
        try:
            x0 = 0.5 * np.linalg.solve(obj.curvature(), obj.mu)
        except np.linalg.LinAlgError:
            x0 = np.zeros(obj.n)
        x0 = shrink_into_domain(obj, x0)
    candidates = [x0]
    if not cs.is_unconstrained:
        candidates.append(np.zeros(obj.n))
        if cs.budget is not None:
            candidates.append(np.full(obj.n, cs.budget / obj.n))
    cs.check_feasible(obj.n)
    start = None
    for c in candidates:
        p = cs.project(c)
        if obj.domain(p):
            start = p
            break
    if start is None:
        raise InfeasibleError("no feasible point found inside the objective domain")
    try:
        x, report = minimize(obj, start, hess=obj.hess, domain=obj.domain, constraints=cs,
                             tol=tol, max_iter=max_iter)
    except DomainError as exc:  # pragma: no cover - start was checked above
        raise InfeasibleError(str(exc)) from exc
    if report.status is not Status.CONVERGED:
        raise ConvergenceError(
            f"solver stopped with status {report.status.value} after {report.iterations} "
            f"iterations (scaled gradient {report.grad_norm:.3g})")
    return x, report
