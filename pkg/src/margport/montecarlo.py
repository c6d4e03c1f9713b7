"""Monte Carlo estimates of marginalized expected utility and brute-force maximizers.

The innermost integral over returns is always Gaussian and done exactly, so
an estimate averages ``-exp(a^2/2 w'Sw - a mu'w)`` over sampled covariance
matrices ``S`` and sampled mean vectors ``mu``. A naive sampler that also
draws the portfolio return is kept for variance comparisons.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import PortfolioProblem, check_cov
from .distributions import (ShiftedGammaNoise, WishartNoise, as_stream, sample_shifted_gamma,
                            sample_wishart)
from .exceptions import DivergenceWarning

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MCConfig:
    """Sampling settings.

    ``method`` is ``"rao_blackwell"`` (analytic return integral) or
    ``"naive"`` (returns sampled as well). ``antithetic`` pairs each mean
    draw with its reflection about ``mu0``.
    """

    n_samples: int = 100_000
    seed: int = 0
    antithetic: bool = False
    method: str = "rao_blackwell"
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.antithetic and self.n_samples % 2:
            raise ValueError("antithetic sampling needs an even n_samples")
        if self.method not in ("rao_blackwell", "naive"):
            raise ValueError("method must be rao_blackwell or naive")


# ---------------------------------------------------------------------------
# Noise models: each draws samples of the quadratic risk w'Sw
# ---------------------------------------------------------------------------

class FixedCovariance:
    """No covariance noise: ``S = Sigma``."""

    def __init__(self, sigma):
        self.sigma = check_cov(sigma)

    def quadratic(self, w, stream, n, n_jobs=1):
        return np.full(n, float(w @ self.sigma @ w))

    def mgf_finite(self, w, a):
        return True


class WishartCovariance:
    """``S ~ W(alpha, Sigma/alpha)``, sampled as full matrices."""

    def __init__(self, alpha, sigma):
        self.model = WishartNoise(alpha, sigma)

    def quadratic(self, w, stream, n, n_jobs=1):
        S = sample_wishart(self.model, stream, n, n_jobs=n_jobs)
        return np.einsum("i,nij,j->n", w, S, w)

    def mgf_finite(self, w, a):
        return a * a * float(w @ self.model.sigma @ w) / self.model.alpha < 1.0


class ScaledCorrelation:
    """``S = s2 R`` with ``s2`` shifted-gamma (one noisy variance for all assets)."""

    def __init__(self, gamma: ShiftedGammaNoise, R):
        self.gamma = gamma
        self.R = check_cov(R)

    def quadratic(self, w, stream, n, n_jobs=1):
        return sample_shifted_gamma(self.gamma, stream, n, n_jobs=n_jobs) * float(w @ self.R @ w)

    def mgf_finite(self, w, a):
        return a * a * self.gamma.sigma2 * float(w @ self.R @ w) / self.gamma.alpha < 1.0


class BlockGamma:
    """Independent blocks, ``S_i = s2_i R_i`` with per-block shifted-gamma ``s2_i``."""

    def __init__(self, blocks):
        # blocks: iterable of (asset indices, R_i, ShiftedGammaNoise)
        self.blocks = [(np.asarray(idx), check_cov(R), g) for idx, R, g in blocks]

    def quadratic(self, w, stream, n, n_jobs=1):
        qs = [float(w[idx] @ R @ w[idx]) for idx, R, _ in self.blocks]

        def draw(rng, m):
            out = np.zeros(m)
            for q, (_, _, g) in zip(qs, self.blocks):
                s2 = rng.gamma(g.alpha / 2.0, 2.0 * g.sigma2 / g.alpha, size=m) + g.sigma2_min
                out += s2 * q
            return out

        return stream.draw(n, draw, n_jobs=n_jobs)

    def mgf_finite(self, w, a):
        return all(a * a * g.sigma2 * float(w[idx] @ R @ w[idx]) / g.alpha < 1.0
                   for idx, R, g in self.blocks)


def _mean_draws(problem, w, stream, n, antithetic):
    # samples of mu'w for mu ~ N(mu0, diag(sigma0))
    m = float(problem.mu0 @ w)
    s = math.sqrt(float(problem.sigma0_diag @ (w * w)))
    if s == 0.0:
        return np.full(n, m)
    if antithetic:
        # draw i and draw i + n/2 are reflections; n is even (see MCConfig)
        z = stream.draw(n // 2, lambda g, k: g.standard_normal(k))
        return m + s * np.concatenate([z, -z])
    return m + s * stream.draw(n, lambda g, k: g.standard_normal(k))


def _summary(values, paired):
    n = values.size
    if paired and n >= 4:
        h = n // 2
        pairs = 0.5 * (values[:h] + values[h:2 * h])
        return float(values.mean()), float(pairs.std(ddof=1) / math.sqrt(h))
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def _check_tail(values, noise, w, a):
    total = np.abs(values).sum()
    if not noise.mgf_finite(w, a):
        warnings.warn("expected utility is infinite for these weights; the running mean "
                      "does not converge", DivergenceWarning, stacklevel=3)
    elif total > 0 and np.abs(values).max() > 0.5 * total and values.size > 100:
        warnings.warn("a single sample dominates the estimate (heavy tail)", DivergenceWarning,
                      stacklevel=3)


def utility_samples(problem: PortfolioProblem, noise, w, cfg: MCConfig = MCConfig()):
    """Per-sample values whose mean estimates ``E[-exp(-a w'r)]``."""
    w = np.asarray(w, dtype=float)
    a = problem.risk_aversion
    stream = as_stream(cfg.seed)
    n = int(cfg.n_samples)
    quad = noise.quadratic(w, stream, n, cfg.n_jobs)
    mw = _mean_draws(problem, w, stream, n, cfg.antithetic)
    if cfg.method == "naive":
        x = mw + np.sqrt(quad) * stream.draw(n, lambda g, k: g.standard_normal(k))
        return -np.exp(-a * x)
    return -np.exp(0.5 * a * a * quad - a * mw)


def mc_expected_utility(problem: PortfolioProblem, noise, w, cfg: MCConfig = MCConfig()):
    """Estimate the marginalized expected utility of portfolio ``w``.

    Returns
    -------
    estimate, standard_error : float
    """
    vals = utility_samples(problem, noise, w, cfg)
    _check_tail(vals, noise, np.asarray(w, dtype=float), problem.risk_aversion)
    return _summary(vals, cfg.antithetic)


def mc_two_state_utility(sc, w, cfg: MCConfig = MCConfig()):
    """Estimate ``E[-exp(-a w'r)]`` for the two-state mixture by drawing the state."""
    w = np.asarray(w, dtype=float)
    a = sc.risk_aversion
    stream = as_stream(cfg.seed)
    normal = stream.draw(cfg.n_samples, lambda g, k: g.random(k)) < sc.p
    e_n = 0.5 * a * a * float(w @ sc.sigma_n @ w) - a * float(sc.mu_n @ w)
    e_s = 0.5 * a * a * float(w @ sc.sigma_s @ w) - a * float(sc.mu_s @ w)
    vals = -np.exp(np.where(normal, e_n, e_s))
    return _summary(vals, False)


def mc_directional_derivative(problem: PortfolioProblem, noise, direction, t,
                              cfg: MCConfig = MCConfig()):
    """Estimate ``d/dt E[-exp(-a t direction'r)]`` with common random numbers.

    Zero at the optimal scale ``t`` when the optimum is along ``direction``.
    """
    d = np.asarray(direction, dtype=float)
    a = problem.risk_aversion
    stream = as_stream(cfg.seed)
    n = int(cfg.n_samples)
    quad = noise.quadratic(d, stream, n, cfg.n_jobs)
    mw = _mean_draws(problem, d, stream, n, cfg.antithetic)
    vals = -np.exp(0.5 * a * a * t * t * quad - a * t * mw) * (a * a * t * quad - a * mw)
    return _summary(vals, cfg.antithetic)


# ---------------------------------------------------------------------------
# Brute-force maximization
# ---------------------------------------------------------------------------

def _safe(fun, x):
    try:
        v = float(fun(x))
    except (ValueError, ArithmeticError):
        return -math.inf
    return v if math.isfinite(v) else -math.inf


def _golden(f, lo, hi, tol):
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
    return 0.5 * (lo + hi)


def _refine_1d(f, lo, hi, width):
    """Golden section, then bisection on the sign of ``f(x + h) - f(x - h)``."""
    x = _golden(f, lo, hi, 1e-6 * width)
    h = 1e-5 * width
    a, b = max(lo, x - 1e-5 * width), min(hi, x + 1e-5 * width)
    for _ in range(200):
        if b - a <= 1e-13 * max(1.0, abs(x)):
            break
        m = 0.5 * (a + b)
        if f(m + h) > f(m - h):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def grid_maximize(fun, bounds, resolution=201, *, refine=True, sweeps=50):
    """Maximize ``fun`` over a box by dense grid scan plus local refinement.

    Parameters
    ----------
    fun : callable
        Objective; may raise ``ValueError`` or return ``-inf``/``nan``
        outside its domain.
    bounds : sequence of (lo, hi)
        At most three dimensions.
    resolution : int
        Grid points per axis.

    Returns
    -------
    x : ndarray
    value : float
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    dim = bounds.shape[0]
    if dim > 3:
        raise ValueError("grid_maximize supports at most three dimensions")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    vals = np.array([_safe(fun, p) for p in mesh])
    x = mesh[int(np.argmax(vals))].copy()
    if not refine:
        return x, _safe(fun, x)
    steps = (bounds[:, 1] - bounds[:, 0]) / (resolution - 1)
    for _ in range(sweeps if dim > 1 else 1):
        prev = x.copy()
        for k in range(dim):
            def f1(t, k=k):
                y = x.copy()
                y[k] = t
                return _safe(fun, y)
            lo = max(bounds[k, 0], x[k] - steps[k])
            hi = min(bounds[k, 1], x[k] + steps[k])
            x[k] = _refine_1d(f1, lo, hi, bounds[k, 1] - bounds[k, 0])
        if np.max(np.abs(x - prev)) < 1e-12:
            break
    return x, _safe(fun, x)


def simplex_grid_search(fun, dim=3, step=1e-3):
    """Maximize ``fun`` over the grid ``{w >= 0, sum(w) = 1}`` with spacing ``step``.

    Two or three dimensions.
    """
    k = int(round(1.0 / step))
    if dim == 2:
        pts = np.column_stack([np.arange(k + 1), k - np.arange(k + 1)]) / k
    elif dim == 3:
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        keep = i + j <= k
        i, j = i[keep], j[keep]
        pts = np.column_stack([i, j, k - i - j]) / k
    else:
        raise ValueError("simplex grid supports two or three dimensions")
    vals = fun(pts) if getattr(fun, "vectorized", False) else np.array([_safe(fun, p) for p in pts])
    best = int(np.argmax(vals))
    return pts[best], float(vals[best])
