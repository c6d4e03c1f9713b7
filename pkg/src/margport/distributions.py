"""Noise models for variances and covariance matrices, plus posterior densities.

Samplers take an :class:`RngStream`. A stream splits any request into fixed
blocks of ``BLOCK`` draws, each with its own child seed, so the numbers
produced never depend on how the work is partitioned across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import check_cov
from .exceptions import ConvergenceError, DomainError

BLOCK = 8192


class RngStream:
    """Seeded source of reproducible, partition-independent random blocks.

    Block ``k`` of the stream is always generated from the ``k``-th child of
    ``SeedSequence(seed)``, so a draw of ``n`` values is identical whether
    computed serially or with ``n_jobs`` threads.
    """

    def __init__(self, seed=0, *, block=BLOCK):
        self.seed = int(seed)
        self.block = int(block)
        self._offset = 0  # number of blocks consumed so far

    def _generator(self, k):
        ss = np.random.SeedSequence(self.seed, spawn_key=(k,))
        return np.random.Generator(np.random.PCG64(ss))

    def draw(self, n, fn, *, n_jobs=1):
        """Evaluate ``fn(rng, count)`` over consecutive blocks and concatenate.

        ``fn`` must return an array whose first axis has length ``count``.
        """
        n = int(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        nblocks = -(-n // self.block)
        sizes = [self.block] * (nblocks - 1) + [n - self.block * (nblocks - 1)]
        keys = range(self._offset, self._offset + nblocks)
        self._offset += nblocks

        def run(args):
            k, m = args
            return fn(self._generator(k), m)

        if n_jobs == 1 or nblocks == 1:
            parts = [run(a) for a in zip(keys, sizes)]
        else:
            with ThreadPoolExecutor(max_workers=n_jobs) as ex:
                parts = list(ex.map(run, zip(keys, sizes)))
        return np.concatenate(parts, axis=0)


def as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else rng)


# ---------------------------------------------------------------------------
# Shifted gamma variance noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftedGammaNoise:
    """Variance ``s2 ~ Gamma(shape=alpha/2, scale=2 sigma2/alpha) + sigma2_min``.

    Mean ``sigma2_min + sigma2``, variance ``2 sigma2**2 / alpha``.
    """

    alpha: float
    sigma2: float
    sigma2_min: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be > 0")
        if not self.sigma2_min >= 0:
            raise ValueError("sigma2_min must be >= 0")

    @property
    def mean(self):
        return self.sigma2_min + self.sigma2

    @property
    def var(self):
        return 2.0 * self.sigma2 ** 2 / self.alpha


def sample_shifted_gamma(model: ShiftedGammaNoise, rng, n, *, n_jobs=1) -> np.ndarray:
    shape, scale = model.alpha / 2.0, 2.0 * model.sigma2 / model.alpha
    draws = as_stream(rng).draw(n, lambda g, m: g.gamma(shape, scale, size=m), n_jobs=n_jobs)
    return draws + model.sigma2_min


def shifted_gamma_log_mgf(model: ShiftedGammaNoise, t) -> float:
    t = float(t)
    limit = model.alpha / (2.0 * model.sigma2)
    if t >= limit:
        raise DomainError(f"mgf diverges for t >= alpha/(2 sigma2) = {limit:.6g}")
    return model.sigma2_min * t - 0.5 * model.alpha * np.log1p(-2.0 * model.sigma2 * t / model.alpha)


def shifted_gamma_mgf(model: ShiftedGammaNoise, t) -> float:
    """``E[exp(t s2)] = exp(sigma2_min t) (1 - 2 sigma2 t / alpha)^(-alpha/2)``."""
    return float(np.exp(shifted_gamma_log_mgf(model, t)))


# ---------------------------------------------------------------------------
# Wishart covariance noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WishartNoise:
    """Covariance ``S ~ W_N(alpha, sigma/alpha)`` so that ``E[S] = sigma``."""

    alpha: float
    sigma: np.ndarray

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        object.__setattr__(self, "sigma", check_cov(self.sigma))

    @property
    def dim(self):
        return self.sigma.shape[0]


def sample_wishart(model: WishartNoise, rng, n, *, n_jobs=1) -> np.ndarray:
    """Draw ``n`` matrices by the Bartlett decomposition.

    ``S = L A A^T L^T`` with ``L`` the Cholesky factor of ``sigma/alpha`` and
    ``A`` lower triangular: ``A_ii^2 ~ chi2(alpha - i)`` (sampled as
    ``2 Gamma((alpha - i)/2)``, so fractional ``alpha`` is fine) and standard
    normal entries below the diagonal.

    Returns
    -------
    ndarray, shape (n, dim, dim)
    """
    d = model.dim
    if not model.alpha > d - 1:
        raise DomainError(f"alpha must exceed dim - 1 = {d - 1} for the Bartlett construction")
    L = np.linalg.cholesky(model.sigma / model.alpha)
    dof = model.alpha - np.arange(d)
    rows, cols = np.tril_indices(d, -1)

    def block(g, m):
        A = np.zeros((m, d, d))
        A[:, np.arange(d), np.arange(d)] = np.sqrt(2.0 * g.gamma(dof / 2.0, size=(m, d)))
        A[:, rows, cols] = g.standard_normal((m, rows.size))
        LA = L @ A
        return LA @ np.swapaxes(LA, 1, 2)

    return as_stream(rng).draw(n, block, n_jobs=n_jobs)


def wishart_log_mgf(model: WishartNoise, w, a) -> float:
    """Log of ``E[exp(a^2/2 w'Sw)] = (1 - (a^2/alpha) w'Sigma w)^(-alpha/2)``.

    Uses the rank-one identity ``|I - c Sigma w w'| = 1 - c w'Sigma w``.
    """
    w = np.asarray(w, dtype=float)
    x = a * a * float(w @ model.sigma @ w) / model.alpha
    if x >= 1.0:
        raise DomainError("Wishart mgf diverges: (a^2/alpha) w'Sigma w >= 1")
    return -0.5 * model.alpha * np.log1p(-x)


def wishart_mgf(model: WishartNoise, w, a) -> float:
    return float(np.exp(wishart_log_mgf(model, w, a)))


# ---------------------------------------------------------------------------
# Posterior densities
# ---------------------------------------------------------------------------

def scaled_inv_chi2_pdf(sigma2, n, s2):
    """Density of the population variance given a sample variance.

    Scaled inverse chi-squared with ``nu = n - 1`` and scale ``s2``::

        p(sigma2) = (nu s2/2)^(nu/2) / Gamma(nu/2) * sigma2^-(nu/2+1) * exp(-nu s2 / (2 sigma2))

    The normalizing constant is analytic.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if n < 2 or not s2 > 0 or np.any(sigma2 <= 0):
        raise DomainError("need n >= 2, s2 > 0 and sigma2 > 0")
    nu = n - 1.0
    half = 0.5 * nu
    logp = (half * np.log(half * s2) - gammaln(half)
            - (half + 1.0) * np.log(sigma2) - half * s2 / sigma2)
    out = np.exp(logp)
    return out if out.ndim else float(out)


def scaled_inv_chi2_moments(n, s2):
    """Mean and variance ``s2 (n-1)/(n-3)`` and ``2 s2^2 (n-1)^2 / ((n-3)^2 (n-5))``."""
    if n <= 5:
        raise DomainError("variance is finite only for n > 5")
    mean = s2 * (n - 1.0) / (n - 3.0)
    var = s2 ** 2 * 2.0 * (n - 1.0) ** 2 / ((n - 3.0) ** 2 * (n - 5.0))
    return mean, var


def hyp2f1(a, b, c, z, *, rtol=1e-15, max_terms=100_000) -> float:
    """Gauss hypergeometric function by direct power-series summation.

    Valid for ``c > 0`` and ``0 <= z < 1``; no analytic continuation.
    Summation stops when a term drops below ``rtol`` times the partial sum.

    Raises
    ------
    ConvergenceError
        If ``max_terms`` terms are not enough.
    """
    if not c > 0:
        raise DomainError("c must be > 0")
    if not 0.0 <= z < 1.0:
        raise DomainError("z must lie in [0, 1)")
    total, term = 1.0, 1.0
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        total += term
        if abs(term) < rtol * abs(total):
            return total
        if term == 0.0:
            return total
    raise ConvergenceError(f"hyp2f1 series did not converge in {max_terms} terms")


def conditional_correlation_pdf(rho, r, n):
    """Confidence density of the correlation ``rho`` given a sample correlation ``r``.

    With ``nu = n - 1``::

        pi(rho | r) = Gamma(nu+1) / (sqrt(2 pi) Gamma(nu+1/2))
                      (1-r^2)^((nu-1)/2) (1-rho^2)^((nu-2)/2) (1-r rho)^((1-2nu)/2)
                      2F1(3/2, -1/2; nu+1/2; (1+r rho)/2)
    """
    if not -1.0 < r < 1.0:
        raise DomainError("r must lie in (-1, 1)")
    if n < 3:
        raise DomainError("n must be >= 3")
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho_arr) >= 1.0):
        raise DomainError("rho must lie in (-1, 1)")
    nu = n - 1.0
    lognorm = gammaln(nu + 1.0) - gammaln(nu + 0.5) - 0.5 * np.log(2.0 * np.pi)
    flat = rho_arr.ravel()
    out = np.empty_like(flat)
    for i, p in enumerate(flat):
        rp = r * p
        logp = (lognorm + 0.5 * (nu - 1.0) * np.log1p(-r * r)
                + 0.5 * (nu - 2.0) * np.log1p(-p * p)
                + 0.5 * (1.0 - 2.0 * nu) * np.log1p(-rp))
        out[i] = np.exp(logp) * hyp2f1(1.5, -0.5, nu + 0.5, 0.5 * (1.0 + rp))
    out = out.reshape(rho_arr.shape)
    return out if out.ndim else float(out)


def wishart_vol_corr(samples) -> np.ndarray:
    """Volatilities and correlation of 2x2 matrices: columns ``vol_a, vol_b, corr``."""
    s = np.asarray(samples)
    va, vb = np.sqrt(s[:, 0, 0]), np.sqrt(s[:, 1, 1])
    return np.column_stack([va, vb, s[:, 0, 1] / (va * vb)])
