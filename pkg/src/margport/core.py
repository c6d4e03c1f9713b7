"""Shared domain types, matrix validation and CARA utility primitives."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exceptions import NotPositiveDefiniteError, SchemaError

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def check_vector(x, name="vector", dim=None) -> np.ndarray:
    """Return ``x`` as a finite 1-D float array, optionally of length ``dim``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {dim}")
    return arr


def check_cov(sigma, name="sigma", *, positive_diag=True) -> np.ndarray:
    """Validate a covariance matrix and return a read-only float copy.

    The matrix must be square, symmetric to within 1e-12 per entry and
    positive semidefinite (smallest eigenvalue >= -1e-10). Non-symmetric
    input is rejected rather than symmetrized.

    Parameters
    ----------
    sigma : array_like, shape (n, n)
    name : str
        Used in error messages.
    positive_diag : bool
        Also require strictly positive diagonal entries, as every allocator
        does for its covariance argument.
    """
    arr = np.asarray(sigma, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    asym = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"{name} is not symmetric (max |S - S^T| = {asym:.3g})")
    min_eig = float(np.linalg.eigvalsh(arr).min())
    if min_eig < -PSD_TOL:
        raise NotPositiveDefiniteError(
            f"{name} is not positive semidefinite (min eigenvalue {min_eig:.3g})",
            min_eigenvalue=min_eig,
        )
    if positive_diag and np.any(np.diag(arr) <= 0):
        raise ValueError(f"{name} must have strictly positive diagonal entries")
    return _frozen(arr)


@dataclass(frozen=True)
class ReturnBeliefs:
    """Gaussian beliefs about expected excess returns.

    ``mu0`` is the centre and ``sigma0_diag`` the diagonal of the (diagonal)
    uncertainty matrix of the expected returns.
    """

    mu0: np.ndarray
    sigma0_diag: np.ndarray | None = None

    def __post_init__(self):
        mu0 = check_vector(self.mu0, "mu0")
        s0 = np.zeros_like(mu0) if self.sigma0_diag is None else check_vector(
            self.sigma0_diag, "sigma0_diag", mu0.shape[0])
        if np.any(s0 < 0):
            raise ValueError("sigma0_diag entries must be nonnegative")
        object.__setattr__(self, "mu0", _frozen(mu0))
        object.__setattr__(self, "sigma0_diag", _frozen(s0))

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]

    @property
    def sigma0(self) -> np.ndarray:
        return np.diag(self.sigma0_diag)


@dataclass(frozen=True)
class PortfolioProblem:
    """Assets with return beliefs, covariance and a CARA risk aversion.

    A nonzero ``risk_free`` rate is folded in at construction by shifting the
    expected returns, so ``mu0`` always holds excess returns.
    """

    mu0: np.ndarray
    sigma: np.ndarray
    risk_aversion: float = 1.0
    sigma0_diag: np.ndarray | None = None
    risk_free: float = 0.0

    def __post_init__(self):
        beliefs = ReturnBeliefs(self.mu0, self.sigma0_diag)
        sigma = check_cov(self.sigma)
        if sigma.shape[0] != beliefs.dim:
            raise ValueError(
                f"sigma is {sigma.shape[0]}x{sigma.shape[0]} but mu0 has length {beliefs.dim}")
        a = float(self.risk_aversion)
        if not (np.isfinite(a) and a > 0):
            raise ValueError("risk_aversion must be strictly positive")
        r0 = float(self.risk_free)
        if not np.isfinite(r0):
            raise ValueError("risk_free must be finite")
        object.__setattr__(self, "mu0", _frozen(beliefs.mu0 - r0))
        object.__setattr__(self, "sigma0_diag", beliefs.sigma0_diag)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "risk_aversion", a)
        object.__setattr__(self, "risk_free", r0)

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]

    @property
    def sigma0(self) -> np.ndarray:
        return np.diag(self.sigma0_diag)

    @property
    def beliefs(self) -> ReturnBeliefs:
        return ReturnBeliefs(self.mu0, self.sigma0_diag)

    def replace(self, **changes) -> "PortfolioProblem":
        kw = dict(mu0=self.mu0, sigma=self.sigma, risk_aversion=self.risk_aversion,
                  sigma0_diag=self.sigma0_diag, risk_free=0.0)
        kw.update(changes)
        return PortfolioProblem(**kw)

    def mv_weights(self) -> np.ndarray:
        """Classical mean-variance solution ``Sigma^-1 mu0 / a``."""
        return np.linalg.solve(self.sigma, self.mu0) / self.risk_aversion


@dataclass(frozen=True)
class TransactionCost:
    """Quadratic turnover penalty ``(eta/2)|w - w0|^2`` around target weights."""

    eta: float
    target_weights: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise ValueError("eta must be >= 0")
        object.__setattr__(self, "target_weights",
                           _frozen(check_vector(self.target_weights, "target_weights")))


@dataclass
class AllocationResult:
    """Outcome of an allocation routine.

    Attributes
    ----------
    weights : ndarray
        Optimal portfolio weights.
    objective : float
        Value of the maximized objective at ``weights`` (certainty-equivalent
        units, i.e. the log-objective divided by ``-a``), when meaningful.
    diagnostics : dict
        Model-specific quantities, e.g. ``d``, ``q`` and ``g`` for the
        Wishart allocator or ``block_weights`` for the block models.
    report : SolveReport or None
        Trace of the numerical solver, ``None`` for closed forms.
    """

    weights: np.ndarray
    objective: float = float("nan")
    diagnostics: dict[str, Any] = field(default_factory=dict)
    report: Any = None


def cara_utility(x, a):
    """CARA utility ``(1 - exp(-a x)) / a``, equal to ``x`` at ``a = 0``.

    Evaluated with ``expm1`` so it is continuous (and accurate) as ``a -> 0``.
    """
    x = np.asarray(x, dtype=float)
    a = float(a)
    if a == 0.0:
        return x if x.ndim else float(x)
    out = -np.expm1(-a * x) / a
    return out if out.ndim else float(out)


def gaussian_log_eu(problem: PortfolioProblem, w) -> float:
    """Log-magnitude ``a^2/2 w'Sw - a mu'w`` of the Gaussian expected utility."""
    w = check_vector(w, "w", problem.dim)
    a = problem.risk_aversion
    return 0.5 * a * a * float(w @ problem.sigma @ w) - a * float(problem.mu0 @ w)


def gaussian_expected_utility(problem: PortfolioProblem, w, *, log=False) -> float:
    """Negated-exponential expected utility under Gaussian returns.

    Returns ``-exp(a^2/2 w'Sigma w - a mu0'w)``. With ``log=True`` the
    log-magnitude (the exponent) is returned instead; the sign is always
    negative, and the log form never overflows. Maximizing this value is
    equivalent to maximizing the mean-variance objective.
    """
    e = gaussian_log_eu(problem, w)
    if log:
        return e
    with np.errstate(over="ignore"):
        return -float(np.exp(e))


def gaussian_log_eu_terms(problem: PortfolioProblem):
    """Return ``(fun, hess)`` callbacks for minimizing :func:`gaussian_log_eu`."""
    a = problem.risk_aversion
    S, mu = problem.sigma, problem.mu0
    H = a * a * np.asarray(S)

    def fun(w):
        Sw = S @ w
        return 0.5 * a * a * float(w @ Sw) - a * float(mu @ w), a * a * Sw - a * mu

    return fun, (lambda w: H)


def apply_transaction_cost(problem: PortfolioProblem, tc: TransactionCost) -> PortfolioProblem:
    """Fold a quadratic turnover penalty into the return beliefs.

    ``mu' = mu + (eta/a) w0`` and ``Sigma' = Sigma + (eta/a^2) I``.
    """
    w0 = check_vector(tc.target_weights, "target_weights", problem.dim)
    a = problem.risk_aversion
    if tc.eta == 0:
        return problem
    return problem.replace(mu0=problem.mu0 + (tc.eta / a) * w0,
                           sigma=problem.sigma + (tc.eta / a ** 2) * np.eye(problem.dim))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

PROBLEM_FIELDS = {"mu0", "sigma", "sigma0_diag", "risk_aversion", "risk_free"}


def _require(doc, key, pointer=""):
    if key not in doc:
        raise SchemaError(f"missing required field '{key}'", f"{pointer}/{key}")
    return doc[key]


def _as_number(value, pointer):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError("expected a number", pointer)
    return float(value)


def _as_array(value, pointer, ndim=1):
    if not isinstance(value, list):
        raise SchemaError("expected an array", pointer)
    if ndim == 1:
        return np.array([_as_number(v, f"{pointer}/{i}") for i, v in enumerate(value)])
    return np.array([_as_array(row, f"{pointer}/{i}") for i, row in enumerate(value)])


def check_fields(doc, allowed, pointer=""):
    """Reject unknown keys in a JSON object."""
    if not isinstance(doc, dict):
        raise SchemaError("expected an object", pointer)
    for key in doc:
        if key not in allowed:
            raise SchemaError(f"unknown field '{key}'", f"{pointer}/{key}")


def problem_from_json(doc, pointer="", extra=()) -> PortfolioProblem:
    """Build a :class:`PortfolioProblem` from a decoded JSON object.

    Fields: ``mu0``, ``sigma``, ``sigma0_diag`` (optional), ``risk_aversion``
    and ``risk_free`` (optional). Unknown fields raise :class:`SchemaError`
    unless listed in ``extra``.
    """
    check_fields(doc, PROBLEM_FIELDS | set(extra), pointer)
    mu0 = _as_array(_require(doc, "mu0", pointer), f"{pointer}/mu0")
    sigma = _as_array(_require(doc, "sigma", pointer), f"{pointer}/sigma", ndim=2)
    s0 = doc.get("sigma0_diag")
    s0 = None if s0 is None else _as_array(s0, f"{pointer}/sigma0_diag")
    a = _as_number(_require(doc, "risk_aversion", pointer), f"{pointer}/risk_aversion")
    r0 = _as_number(doc.get("risk_free", 0.0), f"{pointer}/risk_free")
    try:
        return PortfolioProblem(mu0, sigma, a, s0, r0)
    except ValueError as exc:
        raise SchemaError(str(exc), pointer or "/") from exc


def problem_to_json(problem: PortfolioProblem) -> dict:
    return {
        "mu0": problem.mu0.tolist(),
        "sigma": problem.sigma.tolist(),
        "sigma0_diag": problem.sigma0_diag.tolist(),
        "risk_aversion": problem.risk_aversion,
        "risk_free": 0.0,
    }
