"""Closed forms checked against Monte Carlo and brute-force oracles.

Each check yields a :class:`CheckResult`. Stochastic checks pass when the
z-score of the MC estimate against the analytic value is at most 3;
deterministic checks compare an analytic value with an independent numeric
one at a fixed tolerance and carry no standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import blocks, scenario, univariate, wishart
from .core import PortfolioProblem, ReturnBeliefs, gaussian_expected_utility
from .distributions import ShiftedGammaNoise
from .montecarlo import (BlockGamma, MCConfig, ScaledCorrelation,
                         WishartCovariance, grid_maximize, mc_directional_derivative,
                         mc_expected_utility, mc_two_state_utility)

Z_LIMIT = 3.0


@dataclass
class CheckResult:
    check: str
    analytic: float
    mc_estimate: float
    mc_se: float = math.nan
    z_score: float = math.nan
    passed: bool = False

    def __post_init__(self):
        for k in ("analytic", "mc_estimate", "mc_se", "z_score"):
            setattr(self, k, float(getattr(self, k)))
        self.passed = bool(self.passed)

    def row(self):
        return [self.check, self.analytic, self.mc_estimate, self.mc_se, self.z_score, self.passed]


def _stochastic(name, analytic, est, se):
    z = (est - analytic) / se if se > 0 else (0.0 if est == analytic else math.inf)
    return CheckResult(name, analytic, est, se, z, abs(z) <= Z_LIMIT)


def _deterministic(name, analytic, numeric, tol):
    return CheckResult(name, analytic, numeric, passed=abs(analytic - numeric) <= tol)


# fixed instances; every one keeps a^2/alpha w'Sigma w small so the
# estimators have finite variance
_S2 = np.array([[0.04, 0.01], [0.01, 0.09]])
_S3 = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.02], [0.0, 0.02, 0.05]])


def _wishart_checks(cfg, g_bias):
    out = []
    w = np.array([0.8, 0.3])
    # alpha = 1e12 is a zero-noise proxy; the mean uncertainty folds into
    # the covariance of the Gaussian closed form
    ppg = PortfolioProblem([0.05, 0.03], _S2, 2.0, sigma0_diag=[0.01, 0.02])
    flat = ppg.replace(sigma=ppg.sigma + ppg.sigma0, sigma0_diag=None)
    e, se = mc_expected_utility(ppg, WishartCovariance(1e12, ppg.sigma), w, cfg)
    out.append(_stochastic("gaussian_eu_alpha_1e12", gaussian_expected_utility(flat, w), e, se))

    pp = PortfolioProblem([0.05, 0.03], _S2, 2.0)
    p = wishart.WishartAllocProblem(pp, 50.0)
    e, se = mc_expected_utility(pp, WishartCovariance(50.0, pp.sigma), w, cfg)
    out.append(_stochastic("wishart_eu_2d", wishart.expected_utility(p, w), e, se))

    pp3 = PortfolioProblem([0.05, 0.03, 0.04], _S3, 2.0, sigma0_diag=[0.01, 0.02, 0.005])
    p3 = wishart.WishartAllocProblem(pp3, 20.0)
    w3, _ = wishart.solve_weights_full(p3)
    e, se = mc_expected_utility(pp3, WishartCovariance(20.0, pp3.sigma), w3, cfg)
    out.append(_stochastic("wishart_eu_sigma0_3d", wishart.expected_utility(p3, w3), e, se))

    # first-order condition along the mean-variance direction: the expected
    # utility is flat at the closed-form scale g, so a biased g shows up
    ppg = PortfolioProblem([0.2, 0.15], _S2, 2.0)
    alpha = 20.0
    direction = ppg.mv_weights()
    q = float(ppg.mu0 @ np.linalg.solve(ppg.sigma, ppg.mu0))
    g = wishart.scaling_g_wishart(q, alpha) * (1.0 + g_bias)
    e, se = mc_directional_derivative(ppg, WishartCovariance(alpha, ppg.sigma), direction, g, cfg)
    out.append(_stochastic("wishart_scaling_stationarity", 0.0, e, se))
    return out


def _univariate_checks(cfg):
    up = univariate.UnivariateProblem(0.08, 0.0225, 10.0, 2.0, sigma_min_sq=0.01, sigma0_sq=0.005)
    w = univariate.solve_cubic(up).weights[0]
    pp = PortfolioProblem([up.mu0], [[up.sigma_min_sq + up.sigma_sq]], up.risk_aversion,
                          sigma0_diag=[up.sigma0_sq])
    noise = ScaledCorrelation(ShiftedGammaNoise(up.alpha, up.sigma_sq, up.sigma_min_sq), [[1.0]])
    e, se = mc_expected_utility(pp, noise, [w], cfg)
    return [_stochastic("univariate_shifted_gamma_eu",
                        univariate.marginal_expected_utility(up, w, log=False), e, se)]


def _block_checks(cfg):
    out = []
    s = blocks.BlockStructure([1, 1, 2])
    R1 = np.array([[1.0, 0.4], [0.4, 1.0]])
    m1 = blocks.Model1Spec(s, [0.01, 0.0], [0.04, 0.09], [15.0, 25.0], [R1, np.eye(1)])
    bel = ReturnBeliefs([0.05, 0.04, 0.06], [0.004, 0.0, 0.01])
    w = blocks.solve_model1(m1, bel, 2.0).weights
    pp = PortfolioProblem(bel.mu0, np.eye(3), 2.0, sigma0_diag=bel.sigma0_diag)
    noise = BlockGamma([(s.members(i), m1.correlations[i],
                         ShiftedGammaNoise(m1.alpha[i], m1.sigma_sq[i], m1.sigma_min_sq[i]))
                        for i in range(s.n_blocks)])
    e, se = mc_expected_utility(pp, noise, w, cfg)
    analytic = -math.exp(-2.0 * blocks.model1_objective(m1, bel, 2.0, w))
    out.append(_stochastic("block_model1_eu", analytic, e, se))

    s2 = blocks.BlockStructure([1, 1, 2, 2])
    m2 = blocks.Model2Spec(s2, 0.01, 0.04, 20.0, [[0.6, 0.2], [0.2, 0.4]])
    bel2 = ReturnBeliefs([0.05, 0.05, 0.03, 0.03], [0.002, 0.002, 0.001, 0.001])
    w2 = blocks.solve_model2(m2, bel2, 2.0).weights
    R = blocks.assemble_block_correlation(m2)
    pp2 = PortfolioProblem(bel2.mu0, R, 2.0, sigma0_diag=bel2.sigma0_diag)
    e, se = mc_expected_utility(pp2, ScaledCorrelation(ShiftedGammaNoise(20.0, 0.04, 0.01), R),
                                w2, cfg)
    analytic = -math.exp(-2.0 * blocks.model2_objective(m2, bel2, 2.0, w2))
    out.append(_stochastic("block_model2_eu", analytic, e, se))
    return out


def _two_state_checks(cfg):
    sc = scenario.TwoStateScenario(0.9, [0.06, 0.04], [[0.0225, 0.005], [0.005, 0.03]],
                                   [-0.3, -0.2], scenario.build_stressed_cov(
                                       scenario.StressedCovSpec(0.45, 0.8, 2)), 2.0)
    w = scenario.solve_two_state(sc).weights
    e, se = mc_two_state_utility(sc, w, cfg)
    return [_stochastic("two_state_eu", -math.exp(scenario.lse_objective(sc, w)), e, se)]


def _deterministic_checks():
    out = []
    # scaling function against a direct 1-D maximization along the MV direction
    for q, alpha in ((1.0, 100.0), (10.0, 10.0)):
        def f(t, q=q, alpha=alpha):
            x = t[0]
            arg = 1.0 - x * x * q / alpha
            return -math.inf if arg <= 0 else x * q + 0.5 * alpha * math.log(arg)
        t, _ = grid_maximize(f, [(0.0, 1.0)], 401)
        out.append(_deterministic(f"scaling_g_q{q:g}_alpha{alpha:g}",
                                  wishart.scaling_g_wishart(q, alpha), float(t[0]), 1e-6))
    up = univariate.UnivariateProblem(0.08, 0.0225, 10.0, 2.0, sigma_min_sq=0.01, sigma0_sq=0.005)
    w, _ = grid_maximize(lambda x: -univariate.marginal_expected_utility(up, x[0]),
                         [(-0.999 * up.w_max, 0.999 * up.w_max)], 2001)
    out.append(_deterministic("univariate_cubic_vs_grid", univariate.solve_cubic(up).weights[0],
                              float(w[0]), 1e-8))
    pp = PortfolioProblem([0.05, 0.03, 0.04], _S3, 2.0)
    p = wishart.WishartAllocProblem(pp, 30.0)
    wa, _ = wishart.solve_weights_no_mu_uncertainty(p)
    wb, _ = wishart.solve_weights_full(p)
    out.append(_deterministic("fixed_point_vs_closed_form", 0.0, float(np.max(np.abs(wa - wb))),
                              1e-10))
    uni = scenario.minimax_portfolio(_S3, 0.0).weights
    out.append(_deterministic("minimax_b0_uniform", 1.0 / 3.0, float(np.max(uni)), 1e-9))
    return out


def run_validation(seed=0, n_samples=100_000, *, g_bias=0.0, n_jobs=1):
    """Run every check and return the list of :class:`CheckResult`.

    ``g_bias`` multiplies the scaling function by ``1 + g_bias`` inside the
    stationarity check; a correct implementation flags any bias of 1%.
    """
    cfg = MCConfig(n_samples=n_samples, seed=seed, n_jobs=n_jobs)
    return (_wishart_checks(cfg, g_bias) + _univariate_checks(cfg) + _block_checks(cfg)
            + _two_state_checks(cfg) + _deterministic_checks())
