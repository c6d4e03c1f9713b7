"""One risky asset with shifted-gamma variance noise and Gaussian mean noise.

After marginalizing over the variance ``s2 ~ Gamma(alpha/2, 2 sigma2/alpha) + sigma2_min``
and the mean ``mu ~ N(mu0, sigma0_sq)``, the expected CARA utility is::

    -exp(a^2/2 (sigma2_min + sigma0_sq) w^2 - a mu0 w) * (1 - a^2 w^2 sigma2 / alpha)^(-alpha/2)

and its maximizer is a root of the cubic::

    a^3 B sigma2 w^3 - a^2 mu0 sigma2 w^2 - a alpha (sigma2 + B) w + mu0 alpha = 0,
    B = sigma2_min + sigma0_sq.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import AllocationResult
from .exceptions import DomainError, MultipleRootsWarning

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnivariateProblem:
    mu0: float
    sigma_sq: float
    alpha: float
    risk_aversion: float = 1.0
    sigma_min_sq: float = 0.0
    sigma0_sq: float = 0.0

    def __post_init__(self):
        if not (self.sigma_sq > 0 and self.alpha > 0 and self.risk_aversion > 0):
            raise ValueError("sigma_sq, alpha and risk_aversion must be > 0")
        if not (self.sigma_min_sq >= 0 and self.sigma0_sq >= 0):
            raise ValueError("sigma_min_sq and sigma0_sq must be >= 0")
        if not math.isfinite(self.mu0):
            raise ValueError("mu0 must be finite")

    @property
    def w_max(self) -> float:
        """Edge of the admissible region ``|w| < sqrt(alpha) / (a sigma)``."""
        return math.sqrt(self.alpha / self.sigma_sq) / self.risk_aversion

    def cubic_coefficients(self):
        a, s2, al = self.risk_aversion, self.sigma_sq, self.alpha
        B = self.sigma_min_sq + self.sigma0_sq
        return (a ** 3 * B * s2, -a * a * self.mu0 * s2, -a * al * (s2 + B), self.mu0 * al)


def marginal_expected_utility(p: UnivariateProblem, w, *, log=True) -> float:
    """Marginalized expected utility, as its log-magnitude by default.

    The utility is ``-exp(L)``; ``L`` is returned when ``log`` is true.
    Maximizing the utility is minimizing ``L``.

    Raises
    ------
    DomainError
        If ``w^2 >= alpha / (a^2 sigma2)``.
    """
    a, w = p.risk_aversion, float(w)
    x = a * a * w * w * p.sigma_sq / p.alpha
    if x >= 1.0:
        raise DomainError("weight outside the region where the marginal utility is finite")
    L = (0.5 * a * a * (p.sigma_min_sq + p.sigma0_sq) * w * w - a * p.mu0 * w
         - 0.5 * p.alpha * math.log1p(-x))
    return L if log else -math.exp(L)


def _marginal_grad(p, w):
    a = p.risk_aversion
    B = p.sigma_min_sq + p.sigma0_sq
    g = 1.0 - a * a * w * w * p.sigma_sq / p.alpha
    return a * a * B * w - a * p.mu0 + a * a * p.sigma_sq * w / g


def cubic_real_roots(c3, c2, c1, c0):
    """Real roots of ``c3 x^3 + c2 x^2 + c1 x + c0`` (``c3 != 0``).

    Depressed-cubic reduction, then the trigonometric form for three real
    roots and Cardano's formula for one. Each root is polished with Newton
    steps on the original polynomial.
    """
    b, c, d = c2 / c3, c1 / c3, c0 / c3
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if p == 0.0 and q == 0.0:
        ts = [0.0]
    elif disc < 0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        ts = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    else:
        sq = math.sqrt(disc)
        u = np.cbrt(-q / 2.0 + sq)
        v = np.cbrt(-q / 2.0 - sq)
        ts = [float(u + v)]
        if disc == 0.0 and p != 0.0:
            ts.append(float(-(u + v) / 2.0))
    roots = []
    for t in ts:
        x = t - shift
        for _ in range(4):
            f = ((c3 * x + c2) * x + c1) * x + c0
            df = (3.0 * c3 * x + 2.0 * c2) * x + c1
            if df == 0.0:
                break
            step = f / df
            x -= step
            if abs(step) <= 1e-16 * max(1.0, abs(x)):
                break
        roots.append(x)
    return sorted(roots)


def _quadratic_real_roots(c2, c1, c0):
    if c2 == 0.0:
        return [] if c1 == 0.0 else [-c0 / c1]
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    # numerically stable pair
    qv = -0.5 * (c1 + math.copysign(sq, c1))
    out = [qv / c2]
    if qv != 0.0:
        out.append(c0 / qv)
    return sorted(out)


def cubic_residual(p: UnivariateProblem, w) -> float:
    """Cubic residual divided by the size of its largest term."""
    c = p.cubic_coefficients()
    terms = [c[0] * w ** 3, c[1] * w ** 2, c[2] * w, c[3]]
    scale = max(abs(t) for t in terms) or 1.0
    return abs(sum(terms)) / scale


def solve_cubic(p: UnivariateProblem) -> AllocationResult:
    """Optimal weight from the cubic optimality condition.

    All real roots are computed, those inside the admissible region
    ``|w| < sqrt(alpha)/(a sigma)`` are kept, and the one with the highest
    marginal utility wins. When ``sigma_min_sq + sigma0_sq`` is negligible
    the cubic degenerates and the quadratic formula is used instead.
    """
    if p.mu0 == 0.0:
        return AllocationResult(np.array([0.0]), 0.0, {"roots": [0.0], "branch": "trivial"})
    T = p.sigma_min_sq + p.sigma0_sq + p.sigma_sq
    if p.sigma_sq ** 2 * p.mu0 ** 2 < 1e-17 * p.alpha * T ** 3:
        # the cubic correction is below rounding and the coefficients may
        # underflow; the small-mean expansion is exact here
        w = asymptotic_weight(p, Regime.MU_SMALL)
        obj = -marginal_expected_utility(p, w) / p.risk_aversion
        return AllocationResult(np.array([w]), obj, {"roots": [w], "branch": "small-mean",
                                                     "residual": cubic_residual(p, w)})
    c3, c2, c1, c0 = p.cubic_coefficients()
    rest =max(abs(c2) * p.w_max ** 2, abs(c1) * p.w_max, abs(c0))
    lead = abs(c3) * p.w_max ** 3
    if lead < 1e-14 * rest:
        roots, branch = _quadratic_real_roots(c2, c1, c0), "quadratic"
    elif lead < 1e-6 * rest:
        # tiny c3 puts one root far out and wrecks the monic form; the
        # reversed polynomial in y = 1/w has leading coefficient mu0 alpha != 0
        ys = cubic_real_roots(c0, c1, c2, c3)
        roots, branch = sorted(1.0 / y for y in ys if y != 0.0), "cubic-reversed"
    else:
        roots, branch = cubic_real_roots(c3, c2, c1, c0), "cubic"
    admissible = [r for r in roots if abs(r) < p.w_max]
    if not admissible:
        logger.error("no admissible root: problem=%s roots=%s", p, roots)
        raise DomainError(f"no real root inside |w| < {p.w_max:.6g}; roots {roots}")
    if len(admissible) > 1:
        warnings.warn(f"{len(admissible)} admissible cubic roots {admissible}",
                      MultipleRootsWarning, stacklevel=2)
    w = min(admissible, key=lambda r: marginal_expected_utility(p, r))
    # the objective is strictly convex (as L) on the admissible region, so a
    # Newton step on its derivative cleans up rounding in the root
    for _ in range(3):
        g = _marginal_grad(p, w)
        a = p.risk_aversion
        gg = 1.0 - a * a * w * w * p.sigma_sq / p.alpha
        h = (a * a * (p.sigma_min_sq + p.sigma0_sq)
             + a * a * p.sigma_sq * (1.0 + a * a * w * w * p.sigma_sq / p.alpha) / gg ** 2)
        wn = w - g / h
        if abs(wn) >= p.w_max or abs(_marginal_grad(p, wn)) >= abs(g):
            break
        w = wn
    obj = -marginal_expected_utility(p, w) / p.risk_aversion
    return AllocationResult(np.array([w]), obj, {"roots": roots, "branch": branch,
                                                 "residual": cubic_residual(p, w)})


class Regime(str, enum.Enum):
    MU_SMALL = "mu_small"
    MU_LARGE = "mu_large"
    ALPHA_LARGE = "alpha_large"
    ALPHA_SMALL = "alpha_small"
    SIGMA0_LARGE = "sigma0_large"
    SIGMA0_SMALL = "sigma0_small"


def asymptotic_weight(p: UnivariateProblem, regime) -> float:
    """Leading term plus first correction of the optimal weight in a limit.

    ``mu_small`` and ``alpha_large`` share the expansion
    ``mu0/(a T) - sigma2^2 mu0^3 / (a alpha T^4)`` with
    ``T = sigma_min_sq + sigma0_sq + sigma_sq``; ``mu_large`` and
    ``alpha_small`` give ``sqrt(alpha)/(a sigma) - alpha/(2 a mu0)``;
    ``sigma0_large`` gives ``mu0/(a sigma0_sq) - mu0 (sigma_min_sq + sigma_sq)/(a sigma0_sq^2)``;
    ``sigma0_small`` (with no variance floor) gives
    ``(-sigma alpha + sqrt(alpha (4 mu0^2 + sigma_sq alpha))) / (2 a mu0 sigma)``.
    The validity conditions of each regime are not checked.
    """
    regime = Regime(regime)
    a, mu, al, s2 = p.risk_aversion, p.mu0, p.alpha, p.sigma_sq
    T = p.sigma_min_sq + p.sigma0_sq + s2
    if regime in (Regime.MU_SMALL, Regime.ALPHA_LARGE):
        return mu / (a * T) - s2 ** 2 * mu ** 3 / (a * al * T ** 4)
    if regime in (Regime.MU_LARGE, Regime.ALPHA_SMALL):
        return math.sqrt(al) / (a * math.sqrt(s2)) - al / (2.0 * a * mu)
    if regime is Regime.SIGMA0_LARGE:
        s0 = p.sigma0_sq
        return mu / (a * s0) - mu * (p.sigma_min_sq + s2) / (a * s0 ** 2)
    s = math.sqrt(s2)
    return (-s * al + math.sqrt(al * (4.0 * mu * mu + s2 * al))) / (2.0 * a * mu * s)
