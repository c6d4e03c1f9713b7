"""Smooth convex minimization with simple constraints.

All allocators hand their (negated) objectives to :func:`minimize`. The
feasible sets are those that admit a cheap Euclidean projection: boxes,
a budget hyperplane, the simplex, and the epigraph of ``max_i w_i`` over a
capped simplex. Iterates never leave the open domain of the objective: a
trial point outside it halves the step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import DomainError, InfeasibleError

# relative slack under which a non-increase of f is attributed to rounding
_ROUNDOFF = 1e-14
_ARMIJO = 1e-4


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    DOMAIN_BREACH = "domain_breach"
    STALLED = "stalled"


@dataclass
class SolveReport:
    """Convergence record of a :func:`minimize` call.

    ``grad_norm`` is the scaled (projected) gradient norm
    ``|r| / max(1, |f|)`` at the returned point; ``history`` holds the
    objective after every accepted iteration.
    """

    iterations: int
    grad_norm: float
    objective: float
    status: Status
    method: str = ""
    history: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def as_dict(self) -> dict:
        return {"iterations": self.iterations, "grad_norm": self.grad_norm,
                "objective": self.objective, "status": self.status.value,
                "method": self.method}


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def project_simplex(x, budget=1.0, nonneg=True) -> np.ndarray:
    """Euclidean projection onto ``{w : sum(w) = budget}`` (``w >= 0`` if ``nonneg``).

    Uses the sort-and-threshold algorithm: O(n log n).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if not nonneg:
        return x - (x.sum() - budget) / n
    if budget <= 0:
        raise InfeasibleError("simplex budget must be positive")
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - budget
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def _box_budget(x, lower, upper, budget):
    """Return ``(w, theta)`` with ``w = clip(x - theta, lower, upper)`` summing to budget."""
    slack = 1e-12 * max(1.0, abs(budget))
    if np.any(lower > upper) or lower.sum() > budget + slack or upper.sum() < budget - slack:
        raise InfeasibleError("box and budget constraints are inconsistent")

    def excess(theta):
        return np.clip(x - theta, lower, upper).sum() - budget

    bps = np.concatenate([x - lower, x - upper])
    bps = np.unique(bps[np.isfinite(bps)])
    if bps.size == 0:
        theta = (x.sum() - budget) / x.shape[0]
        return x - theta, theta
    h = np.array([excess(t) for t in bps])  # nonincreasing in theta
    if h[0] < 0 or h[-1] > 0:
        # root lies beyond the outermost breakpoint; the slope there is minus
        # the number of coordinates unbounded on that side
        left = h[0] < 0
        t0, h0 = (bps[0], h[0]) if left else (bps[-1], h[-1])
        probe = x - (t0 - 1.0 if left else t0 + 1.0)
        k = int(((probe > lower) & (probe < upper)).sum())
        # k == 0: the bounds sum to the budget up to rounding, so every
        # coordinate sits on a bound and the outermost breakpoint is exact
        theta = t0 + h0 / k if k else t0
    else:
        j = int(np.searchsorted(-h, 0.0, side="left"))
        if h[j] == 0:
            theta = bps[j]
        else:
            t_lo, t_hi, h_lo, h_hi = bps[j - 1], bps[j], h[j - 1], h[j]
            theta = t_lo + h_lo * (t_hi - t_lo) / (h_lo - h_hi)
    w = np.clip(x - theta, lower, upper)
    free = (w > lower) & (w < upper)
    if free.any():
        shift = (budget - w.sum()) / free.sum()
        w[free] += shift
        theta -= shift
    return w, theta


def project_box_budget(x, lower, upper, budget=None) -> np.ndarray:
    """Project onto ``{lower <= w <= upper}``, intersected with ``sum(w) = budget``.

    The projection is ``clip(x - theta, lower, upper)`` where ``theta`` makes
    the sum hit the budget. The sum is piecewise linear in ``theta``, so
    ``theta`` is found exactly from the sorted breakpoints.
    """
    x = np.asarray(x, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x.shape)
    if budget is None:
        return np.clip(x, lower, upper)
    return _box_budget(x, lower, upper, budget)[0]


def project_epigraph(x, s, lower, upper, budget):
    """Project ``(x, s)`` onto ``{(w, t) : lower <= w <= min(upper, t), sum(w) = budget}``.

    For a fixed cap ``t`` the ``w`` part is a capped-simplex projection
    ``clip(x - theta, lower, min(upper, t))``. What remains is a convex
    problem in ``t`` whose derivative ``t - s - sum_capped(x_i - theta - t)``
    is nondecreasing; it is bisected to machine precision.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x.shape)
    if budget is None:
        raise InfeasibleError("epigraph projection requires a budget constraint")

    def deriv(t):
        cap = np.minimum(upper, t)
        w, theta = _box_budget(x, lower, cap, budget)
        capped = upper > t
        lam = np.maximum(x[capped] - theta - t, 0.0)
        return t - s - lam.sum(), w

    # smallest feasible cap
    lo = float(np.max(lower))
    if np.minimum(upper, max(lo, budget / n)).sum() >= budget:
        t_min = max(lo, budget / n)
    else:
        hi = max(lo, abs(budget)) + 1.0
        if np.minimum(upper, hi).sum() < budget:
            raise InfeasibleError("epigraph constraint set is empty")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if np.minimum(upper, mid).sum() >= budget:
                hi = mid
            else:
                lo = mid
        t_min = hi
    d_lo, w_lo = deriv(t_min)
    if d_lo >= 0:
        return w_lo, t_min
    w_free = project_box_budget(x, lower, upper, budget)
    lo, hi = t_min, max(s, float(np.max(w_free)), t_min) + 1.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if deriv(mid)[0] < 0:
            lo = mid
        else:
            hi = mid
    return deriv(hi)[1], hi


@dataclass(frozen=True)
class ConstraintSet:
    """Convex feasible set for the decision vector.

    Parameters
    ----------
    lower, upper : float or array_like, optional
        Box bounds on the weights.
    budget : float, optional
        Equality ``sum(w) = budget``.
    nonneg : bool
        Long-only flag, equivalent to ``lower = max(lower, 0)``.
    epigraph : int
        Number of epigraph auxiliaries appended to the decision vector
        (0 or 1). With 1, the last coordinate ``t`` satisfies ``w_i <= t``.
    """

    lower: object = None
    upper: object = None
    budget: float | None = None
    nonneg: bool = False
    epigraph: int = 0

    @classmethod
    def simplex(cls, budget=1.0):
        return cls(budget=budget, nonneg=True)

    @property
    def is_unconstrained(self) -> bool:
        return (self.lower is None and self.upper is None and self.budget is None
                and not self.nonneg and self.epigraph == 0)

    def bounds(self, n):
        lo = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.nonneg:
            lo = np.maximum(lo, 0.0)
        return lo, hi

    def check_feasible(self, n_total):
        if self.epigraph not in (0, 1):
            raise ValueError("only a single epigraph auxiliary is supported")
        n = n_total - self.epigraph
        lo, hi = self.bounds(n)
        if np.any(lo > hi):
            raise InfeasibleError("lower bound exceeds upper bound")
        if self.budget is not None and not (lo.sum() <= self.budget <= hi.sum()):
            raise InfeasibleError("budget outside the range allowed by the bounds")
        if self.epigraph and self.budget is None:
            raise InfeasibleError("epigraph auxiliaries require a budget constraint")

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_unconstrained:
            return x.copy()
        n = x.shape[0] - self.epigraph
        lo, hi = self.bounds(n)
        if self.epigraph:
            w, t = project_epigraph(x[:n], x[n], lo, hi, self.budget)
            return np.append(w, t)
        if (self.nonneg and self.budget is not None and self.lower is None
                and self.upper is None):
            return project_simplex(x, self.budget, nonneg=True)
        return project_box_budget(x, lo, hi, self.budget)

    def violation(self, x) -> float:
        """Largest constraint violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        n = x.shape[0] - self.epigraph
        w = x[:n]
        lo, hi = self.bounds(n)
        v = [0.0, float(np.max(lo - w, initial=0.0)), float(np.max(w - hi, initial=0.0))]
        if self.budget is not None:
            v.append(abs(float(w.sum()) - self.budget))
        if self.epigraph:
            v.append(float(np.max(w - x[n], initial=0.0)))
        return max(v)


# ---------------------------------------------------------------------------
# Minimization
# ---------------------------------------------------------------------------

def _scaled(norm, f):
    return norm / max(1.0, abs(f))


def _evaluate(fun, domain, x):
    if domain is not None and not domain(x):
        return np.inf, None
    f, g = fun(x)
    if not np.isfinite(f):
        return np.inf, None
    return float(f), np.asarray(g, dtype=float)


def _accept(f_new, f, slope, step):
    return f_new <= f + _ARMIJO * step * slope or (
        f_new <= f + _ROUNDOFF * max(1.0, abs(f)) and slope < 0)


def _newton_direction(H, g):
    try:
        c = linalg.cho_factor(H)
        p = -linalg.cho_solve(c, g)
    except (linalg.LinAlgError, ValueError):
        return -g
    if not np.all(np.isfinite(p)) or g @ p >= 0:
        return -g
    return p


def _line_search(fun, domain, x, f, g, p, step=1.0, min_step=1e-20):
    slope = float(g @ p)
    while step > min_step:
        xn = x + step * p
        fn, gn = _evaluate(fun, domain, xn)
        if gn is not None and _accept(fn, f, slope, step):
            return xn, fn, gn, step
        step *= 0.5
    return None


def _unconstrained(fun, x, f, g, hess, domain, tol, max_iter, memory, history):
    S, Y = [], []
    method = "newton" if hess is not None else "lbfgs"
    first = True
    for it in range(max_iter):
        gn = _scaled(np.linalg.norm(g), f)
        if gn < tol:
            if hess is not None:
                # one extra Newton step squares the residual error
                p = _newton_direction(hess(x), g)
                xn = x + p
                fn, gnew = _evaluate(fun, domain, xn)
                if gnew is not None and fn <= f + _ROUNDOFF * max(1.0, abs(f)) and \
                        np.linalg.norm(gnew) <= np.linalg.norm(g):
                    x, f, g = xn, fn, gnew
            return x, f, g, it, Status.CONVERGED, method
        if hess is not None:
            p = _newton_direction(hess(x), g)
            step0 = 1.0
        else:
            q = g.copy()
            alphas = []
            for s, y in reversed(list(zip(S, Y))):
                rho = 1.0 / (y @ s)
                al = rho * (s @ q)
                alphas.append((rho, al))
                q -= al * y
            if S:
                gamma = (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
            else:
                gamma = 1.0
            r = gamma * q
            for (s, y), (rho, al) in zip(zip(S, Y), reversed(alphas)):
                be = rho * (y @ r)
                r += s * (al - be)
            p = -r
            if g @ p >= 0:
                p = -g
            step0 = min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300)) if first else 1.0
        res = _line_search(fun, domain, x, f, g, p, step0)
        if res is None:
            return x, f, g, it, Status.STALLED, method
        xn, fn, gnew, _ = res
        s, y = xn - x, gnew - g
        if hess is None and s @ y > 1e-16 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        x, f, g = xn, fn, gnew
        history.append(f)
        first = False
    gn = _scaled(np.linalg.norm(g), f)
    return x, f, g, max_iter, Status.CONVERGED if gn < tol else Status.MAX_ITER, method


def _projected_residual(cs, x, g):
    return np.linalg.norm(x - cs.project(x - g))


def _reduced_newton(cs, x, g, H):
    """Newton direction on the free coordinates, respecting the budget."""
    n = x.shape[0]
    lo, hi = cs.bounds(n)
    scale = max(1.0, float(np.max(np.abs(x))))
    at_lo = (x <= lo + 1e-12 * scale) & (g > 0)
    at_hi = (x >= hi - 1e-12 * scale) & (g < 0)
    free = ~(at_lo | at_hi)
    if not free.any():
        return None
    idx = np.nonzero(free)[0]
    Hf = H[np.ix_(idx, idx)]
    gf = g[idx]
    if cs.budget is None:
        try:
            pf = -linalg.solve(Hf, gf, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            return None
    else:
        k = idx.size
        # border scaled to the Hessian so the KKT matrix stays well conditioned
        c = max(float(np.mean(np.abs(np.diag(Hf)))), 1e-300)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = Hf
        K[:k, k] = c
        K[k, :k] = c
        try:
            sol = linalg.solve(K, np.append(-gf, 0.0))
        except (linalg.LinAlgError, ValueError):
            return None
        pf = sol[:k]
    p = np.zeros(n)
    p[idx] = pf
    if not np.all(np.isfinite(p)) or g @ p >= 0:
        return None
    return p


def _constrained(fun, x, f, g, hess, domain, cs, tol, max_iter, history):
    alpha = 1.0 / max(np.linalg.norm(g), 1e-12)
    use_newton = hess is not None and cs.epigraph == 0
    method = "projected-newton" if use_newton else "projected-gradient"
    for it in range(max_iter):
        gn = _scaled(_projected_residual(cs, x, g), f)
        if gn < tol:
            return x, f, g, it, Status.CONVERGED, method
        accepted = None
        if use_newton:
            p = _reduced_newton(cs, x, g, hess(x))
            if p is not None:
                step = 1.0
                while step > 1e-10:
                    xn = cs.project(x + step * p)
                    fn, gnew = _evaluate(fun, domain, xn)
                    if gnew is not None and _accept(fn, f, float(g @ (xn - x)), 1.0):
                        accepted = (xn, fn, gnew)
                        break
                    step *= 0.5
        if accepted is None:
            step = alpha
            while step > 1e-30:
                xn = cs.project(x - step * g)
                d = xn - x
                fn, gnew = _evaluate(fun, domain, xn)
                if gnew is not None and _accept(fn, f, float(g @ d), 1.0):
                    accepted = (xn, fn, gnew)
                    break
                step *= 0.5
        if accepted is None:
            return x, f, g, it, Status.STALLED, method
        xn, fn, gnew = accepted
        s, y = xn - x, gnew - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else alpha * 2.0
        alpha = min(max(alpha, 1e-12), 1e12)
        x, f, g = xn, fn, gnew
        history.append(f)
    gn = _scaled(_projected_residual(cs, x, g), f)
    return x, f, g, max_iter, Status.CONVERGED if gn < tol else Status.MAX_ITER, method


def minimize(fun, x0, *, hess=None, domain=None, constraints=None, tol=1e-9,
             max_iter=10_000, memory=10):
    """Minimize a smooth convex function over a simple convex set.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (value, gradient)``. May return ``inf`` outside its domain.
    x0 : array_like
        Starting point. It is projected onto the constraint set and must then
        lie inside the open domain.
    hess : callable, optional
        ``hess(x) -> ndarray``. When given, Newton steps are used (on the
        free coordinates in the constrained case); otherwise L-BFGS.
    domain : callable, optional
        ``domain(x) -> bool`` membership test for the open domain.
    constraints : ConstraintSet, optional
    tol : float
        Target for the scaled (projected) gradient norm.
    max_iter : int
    memory : int
        L-BFGS history length.

    Returns
    -------
    x : ndarray
    report : SolveReport

    Raises
    ------
    InfeasibleError
        If the constraint set is empty.
    DomainError
        If the (projected) starting point is outside the domain.
    """
    cs = constraints if constraints is not None else ConstraintSet()
    x = np.array(x0, dtype=float)
    cs.check_feasible(x.shape[0])
    x = cs.project(x)
    f, g = _evaluate(fun, domain, x)
    if g is None:
        raise DomainError("starting point lies outside the objective domain")
    history = [f]
    if cs.is_unconstrained:
        x, f, g, it, status, method = _unconstrained(
            fun, x, f, g, hess, domain, tol, max_iter, memory, history)
        gn = _scaled(np.linalg.norm(g), f)
    else:
        x, f, g, it, status, method = _constrained(
            fun, x, f, g, hess, domain, cs, tol, max_iter, history)
        gn = _scaled(_projected_residual(cs, x, g), f)
    if status is Status.STALLED and gn < tol:
        status = Status.CONVERGED
    return x, SolveReport(it, float(gn), float(f), status, method, history)
