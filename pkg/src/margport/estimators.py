"""Scikit-learn style estimators over the functional allocators.

``fit`` takes a ``(n_periods, n_assets)`` matrix of returns, estimates the
moments and stores the allocation in ``weights_``. ``predict`` returns
portfolio returns and ``score`` the mean CARA utility of those returns.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.covariance import EmpiricalCovariance
from sklearn.utils.validation import check_array, check_is_fitted

from . import blocks, scenario, wishart
from .core import PortfolioProblem, ReturnBeliefs, cara_utility
from .solver import ConstraintSet


class BasePortfolio(BaseEstimator):
    """Shared fit/predict/score plumbing.

    Parameters
    ----------
    risk_aversion : float
        CARA coefficient ``a``.
    covariance_estimator : sklearn covariance estimator, optional
        Anything exposing ``fit(X).covariance_``; defaults to
        :class:`sklearn.covariance.EmpiricalCovariance`.
    """

    def __init__(self, risk_aversion=1.0, covariance_estimator=None):
        self.risk_aversion = risk_aversion
        self.covariance_estimator = covariance_estimator

    def _moments(self, X):
        est = (clone(self.covariance_estimator) if self.covariance_estimator is not None
               else EmpiricalCovariance())
        cov = np.asarray(est.fit(X).covariance_, dtype=float)
        return X.mean(axis=0), 0.5 * (cov + cov.T)

    def _allocate(self, X, mu, cov):
        raise NotImplementedError

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_samples=2, ensure_min_features=1)
        self.n_features_in_ = X.shape[1]
        self.mu_, self.covariance_ = self._moments(X)
        self.result_ = self._allocate(X, self.mu_, self.covariance_)
        self.weights_ = np.asarray(self.result_.weights, dtype=float)
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} assets, got {X.shape[1]}")
        return X @ self.weights_

    def score(self, X, y=None):
        """Mean realized CARA utility of the portfolio over the rows of ``X``."""
        return float(np.mean(cara_utility(self.predict(X), self.risk_aversion)))


def _constraints(long_only, budget):
    if not long_only and budget is None:
        return None
    return ConstraintSet(budget=budget, nonneg=bool(long_only))


class WishartPortfolio(BasePortfolio):
    """CARA allocation marginalized over Wishart covariance noise.

    ``alpha=None`` uses the number of observations, the degrees of freedom
    of a sample covariance. With ``mean_uncertainty`` the squared standard
    errors of the sample means enter as ``sigma0_diag``.
    """

    def __init__(self, risk_aversion=1.0, alpha=None, mean_uncertainty=False, long_only=False,
                 budget=None, covariance_estimator=None):
        super().__init__(risk_aversion, covariance_estimator)
        self.alpha = alpha
        self.mean_uncertainty = mean_uncertainty
        self.long_only = long_only
        self.budget = budget

    def _allocate(self, X, mu, cov):
        s0 = np.diag(cov) / X.shape[0] if self.mean_uncertainty else None
        pp = PortfolioProblem(mu, cov, self.risk_aversion, sigma0_diag=s0)
        alpha = float(X.shape[0] if self.alpha is None else self.alpha)
        self.problem_ = wishart.WishartAllocProblem(pp, alpha)
        return wishart.allocate(self.problem_, _constraints(self.long_only, self.budget))


class TwoStatePortfolio(BasePortfolio):
    """Normal state estimated from data, stressed state given.

    The stressed covariance is ``cov_stressed`` when given, otherwise the
    equicorrelated matrix built from ``sigma_s`` and ``rho_s``.
    """

    def __init__(self, risk_aversion=1.0, p=0.9, mu_stressed=None, cov_stressed=None,
                 sigma_s=0.45, rho_s=0.8, long_only=False, budget=None,
                 covariance_estimator=None):
        super().__init__(risk_aversion, covariance_estimator)
        self.p = p
        self.mu_stressed = mu_stressed
        self.cov_stressed = cov_stressed
        self.sigma_s = sigma_s
        self.rho_s = rho_s
        self.long_only = long_only
        self.budget = budget

    def _allocate(self, X, mu, cov):
        n = X.shape[1]
        if self.cov_stressed is not None:
            cs = np.asarray(self.cov_stressed, dtype=float)
        else:
            cs = scenario.build_stressed_cov(scenario.StressedCovSpec(self.sigma_s, self.rho_s, n))
        ms = np.zeros(n) if self.mu_stressed is None else np.asarray(self.mu_stressed, float)
        self.scenario_ = scenario.TwoStateScenario(self.p, mu, cov, ms, cs, self.risk_aversion)
        return scenario.solve_two_state(self.scenario_, _constraints(self.long_only, self.budget))


class MinimaxPortfolio(BasePortfolio):
    """Long-only ``min |w|_inf + (b/2) w'Sigma w``; ignores the sample means."""

    def __init__(self, b=1.0, risk_aversion=1.0, covariance_estimator=None):
        super().__init__(risk_aversion, covariance_estimator)
        self.b = b

    def _allocate(self, X, mu, cov):
        return scenario.minimax_portfolio(cov, self.b)


def block_average_correlation(corr, structure: blocks.BlockStructure):
    """Average a correlation matrix over block pairs; diagonal ones excluded."""
    K = structure.n_blocks
    rho = np.zeros((K, K))
    for i in range(K):
        mi = structure.members(i)
        for j in range(i, K):
            sub = corr[np.ix_(mi, structure.members(j))]
            if i == j:
                m = len(mi)
                rho[i, i] = 0.0 if m == 1 else (sub.sum() - np.trace(sub)) / (m * (m - 1))
            else:
                rho[i, j] = rho[j, i] = sub.mean()
    return rho


class BlockPortfolio(BasePortfolio):
    """Block-equicorrelated allocation with one shifted-gamma variance.

    The correlation is averaged within and across blocks and the variance
    averaged over assets; ``sigma_min_sq`` is the deterministic floor.
    """

    def __init__(self, assignments=None, risk_aversion=1.0, alpha=None, sigma_min_sq=0.0,
                 mean_uncertainty=False, long_only=False, budget=None,
                 covariance_estimator=None):
        super().__init__(risk_aversion, covariance_estimator)
        self.assignments = assignments
        self.alpha = alpha
        self.sigma_min_sq = sigma_min_sq
        self.mean_uncertainty = mean_uncertainty
        self.long_only = long_only
        self.budget = budget

    def _allocate(self, X, mu, cov):
        n = X.shape[1]
        assign = np.ones(n, dtype=int) if self.assignments is None else self.assignments
        structure = blocks.BlockStructure(assign)
        if structure.n_assets != n:
            raise ValueError(f"assignments cover {structure.n_assets} assets, data has {n}")
        sd = np.sqrt(np.diag(cov))
        rho = block_average_correlation(cov / np.outer(sd, sd), structure)
        s2 = float(np.mean(sd ** 2)) - self.sigma_min_sq
        if s2 <= 0:
            raise ValueError("sigma_min_sq exceeds the average sample variance")
        alpha = float(X.shape[0] if self.alpha is None else self.alpha)
        self.spec_ = blocks.Model2Spec(structure, self.sigma_min_sq, s2, alpha, rho)
        s0 = np.diag(cov) / X.shape[0] if self.mean_uncertainty else None
        self.beliefs_ = ReturnBeliefs(mu, s0)
        cons = _constraints(self.long_only, self.budget)
        return blocks.solve_model2(self.spec_, self.beliefs_, self.risk_aversion, cons)
