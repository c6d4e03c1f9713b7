import numpy as np
import pytest
from sklearn.base import clone
from sklearn.covariance import LedoitWolf
from sklearn.exceptions import NotFittedError

from margport import (BlockPortfolio, MinimaxPortfolio, TwoStatePortfolio, WishartPortfolio)
from margport.core import PortfolioProblem
from margport.estimators import block_average_correlation
from margport.blocks import BlockStructure
from margport.wishart import WishartAllocProblem, allocate


@pytest.fixture
def returns():
    rng = np.random.default_rng(3)
    S = np.array([[0.04, 0.01, 0.0, 0.0], [0.01, 0.09, 0.02, 0.0],
                  [0.0, 0.02, 0.05, 0.01], [0.0, 0.0, 0.01, 0.03]]) / 252
    return rng.multivariate_normal(np.full(4, 0.0004), S, size=500)


def test_wishart_portfolio_matches_functional(returns):
    est = WishartPortfolio(risk_aversion=3.0).fit(returns)
    cov = np.cov(returns, rowvar=False, ddof=0)
    ref = allocate(WishartAllocProblem(PortfolioProblem(returns.mean(0), cov, 3.0), 500.0))
    np.testing.assert_allclose(est.weights_, ref.weights, rtol=1e-10)
    assert est.n_features_in_ == 4
    np.testing.assert_allclose(est.predict(returns), returns @ est.weights_)
    x = returns @ est.weights_
    assert est.score(returns) == pytest.approx(np.mean(-np.expm1(-3.0 * x) / 3.0), rel=1e-12)


def test_params_and_clone(returns):
    est = WishartPortfolio(risk_aversion=2.0, alpha=40, long_only=True, budget=1.0)
    params = est.get_params()
    assert params["alpha"] == 40 and params["covariance_estimator"] is None
    c = clone(est).set_params(alpha=80)
    assert c.alpha == 80 and est.alpha == 40
    w = c.fit(returns).weights_
    assert w.min() >= -1e-12 and w.sum() == pytest.approx(1.0)


def test_unfitted_and_shape_errors(returns):
    with pytest.raises(NotFittedError):
        MinimaxPortfolio().predict(returns)
    est = MinimaxPortfolio(b=5.0).fit(returns)
    with pytest.raises(ValueError):
        est.predict(returns[:, :3])


def test_covariance_estimator(returns):
    lw = WishartPortfolio(covariance_estimator=LedoitWolf()).fit(returns)
    np.testing.assert_allclose(lw.covariance_, LedoitWolf().fit(returns).covariance_)
    assert not np.allclose(lw.weights_, WishartPortfolio().fit(returns).weights_)


def test_two_state_and_minimax(returns):
    ts = TwoStatePortfolio(p=1.0, risk_aversion=2.0).fit(returns)
    np.testing.assert_allclose(ts.weights_, np.linalg.solve(ts.covariance_, ts.mu_) / 2.0,
                               rtol=1e-8)
    mm = MinimaxPortfolio(b=0.0).fit(returns)
    np.testing.assert_allclose(mm.weights_, np.full(4, 0.25), atol=1e-9)


def test_block_portfolio(returns):
    est = BlockPortfolio(assignments=[1, 1, 2, 2], alpha=60.0, sigma_min_sq=1e-5,
                         long_only=True, budget=1.0).fit(returns)
    assert est.spec_.structure.n_blocks == 2
    assert est.weights_.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        BlockPortfolio(assignments=[1, 2]).fit(returns)


def test_block_average_correlation():
    R = np.array([[1, 0.5, 0.1], [0.5, 1, 0.3], [0.1, 0.3, 1.0]])
    rho = block_average_correlation(R, BlockStructure([1, 1, 2]))
    np.testing.assert_allclose(rho, [[0.5, 0.2], [0.2, 0.0]])
