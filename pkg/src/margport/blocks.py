"""Block-structured covariance models with shifted-gamma variance noise.

Model 1 gives every block its own variance (and its own noise level) and no
cross-block correlation. Model 2 shares one noisy variance across all assets
and correlates them through equicorrelation blocks. Both lead to concave
marginalized objectives handled by the shared log-barrier objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._objective import MarginalObjective, solve_marginal
from .core import PSD_TOL, SYMMETRY_TOL, AllocationResult, ReturnBeliefs
from .exceptions import DomainError, NotPositiveDefiniteError, SymmetryViolationError
from .solver import ConstraintSet


@dataclass(frozen=True)
class BlockStructure:
    """Assignment of each asset to a block labelled ``1..K``."""

    assignments: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignments)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignments must be a non-empty 1-D array")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(np.equal(np.mod(a, 1), 0)):
                raise ValueError("block ids must be integers")
            a = a.astype(int)
        k = int(a.max())
        if a.min() < 1:
            raise ValueError("block ids start at 1")
        empty = sorted(set(range(1, k + 1)) - set(a.tolist()))
        if empty:
            raise ValueError(f"blocks {empty} have no assets")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    @property
    def n_blocks(self) -> int:
        return int(self.assignments.max())

    @property
    def n_assets(self) -> int:
        return self.assignments.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments - 1, minlength=self.n_blocks)

    def members(self, i) -> np.ndarray:
        """Asset indices of block ``i`` (0-based block index)."""
        return np.flatnonzero(self.assignments == i + 1)

    def indicator(self) -> np.ndarray:
        """``N x K`` 0/1 matrix ``E`` with ``E[n, i] = 1`` when asset ``n`` is in block ``i``."""
        E = np.zeros((self.n_assets, self.n_blocks))
        E[np.arange(self.n_assets), self.assignments - 1] = 1.0
        return E


def _per_block(x, k, name, positive=False):
    arr = np.broadcast_to(np.asarray(x, dtype=float), (k,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if positive and np.any(arr <= 0):
        raise ValueError(f"{name} must be > 0")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be >= 0")
    return arr


def _check_correlation(R, name):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(R - R.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError(f"{name} is not symmetric")
    if np.any(np.abs(np.diag(R) - 1.0) > SYMMETRY_TOL):
        raise ValueError(f"{name} must have a unit diagonal")
    off = R[~np.eye(R.shape[0], dtype=bool)]
    if np.any(np.abs(off) >= 1.0):
        raise ValueError(f"{name} off-diagonal entries must lie in (-1, 1)")
    lam = float(np.linalg.eigvalsh(R).min())
    if lam <= PSD_TOL:
        raise NotPositiveDefiniteError(f"{name} is not positive definite (min eigenvalue {lam:.3g})",
                                       min_eigenvalue=lam)
    return R


@dataclass(frozen=True)
class Model1Spec:
    """Independent blocks, block ``i`` with covariance ``(s2min_i + s2_i) R_i``.

    ``correlations`` defaults to identity matrices.
    """

    structure: BlockStructure
    sigma_min_sq: np.ndarray
    sigma_sq: np.ndarray
    alpha: np.ndarray
    correlations: list = field(default=None)

    def __post_init__(self):
        k = self.structure.n_blocks
        object.__setattr__(self, "sigma_min_sq", _per_block(self.sigma_min_sq, k, "sigma_min_sq"))
        object.__setattr__(self, "sigma_sq", _per_block(self.sigma_sq, k, "sigma_sq", True))
        object.__setattr__(self, "alpha", _per_block(self.alpha, k, "alpha", True))
        sizes = self.structure.sizes
        if self.correlations is None:
            Rs = [np.eye(m) for m in sizes]
        else:
            if len(self.correlations) != k:
                raise ValueError(f"expected {k} correlation matrices")
            Rs = []
            for i, (R, m) in enumerate(zip(self.correlations, sizes)):
                R = _check_correlation(R, f"R_{i + 1}")
                if R.shape[0] != m:
                    raise ValueError(f"R_{i + 1} is {R.shape[0]}x{R.shape[0]}, block has {m} assets")
                Rs.append(R)
        object.__setattr__(self, "correlations", Rs)


def _block_diag(structure, mats):
    n = structure.n_assets
    out = np.zeros((n, n))
    for i, M in enumerate(mats):
        idx = structure.members(i)
        out[np.ix_(idx, idx)] = M
    return out


def model1_covariance(spec: Model1Spec, *, floor=True, noisy=True) -> np.ndarray:
    """Dense block-diagonal covariance (floor part, noisy part, or both)."""
    scale = (spec.sigma_min_sq if floor else 0.0) + (spec.sigma_sq if noisy else 0.0)
    return _block_diag(spec.structure, [s * R for s, R in zip(scale, spec.correlations)])


def model1_quadratic_form(spec: Model1Spec, w) -> float:
    """``w' Sigma_m1 w`` summed blockwise in block order."""
    w = np.asarray(w, dtype=float)
    total = 0.0
    for i, R in enumerate(spec.correlations):
        wi = w[spec.structure.members(i)]
        total += (spec.sigma_min_sq[i] + spec.sigma_sq[i]) * float(wi @ R @ wi)
    return total


def _model1_marginal(spec, beliefs, a):
    s = spec.structure
    if beliefs.dim != s.n_assets:
        raise ValueError(f"beliefs have {beliefs.dim} assets, structure has {s.n_assets}")
    Q = beliefs.sigma0 + model1_covariance(spec, noisy=False)
    terms = [(s.members(i), spec.sigma_sq[i] * R, spec.alpha[i])
             for i, R in enumerate(spec.correlations)]
    return MarginalObjective(beliefs.mu0, Q, terms, a)


def model1_objective(spec: Model1Spec, beliefs: ReturnBeliefs, a, w) -> float:
    """Marginalized Model 1 objective in certainty-equivalent units.

    Raises
    ------
    DomainError
        Naming the first block whose log argument is not positive.
    """
    obj = _model1_marginal(spec, beliefs, a)
    w = np.asarray(w, dtype=float)
    bad = np.flatnonzero(obj.margins(w) <= 0)
    if bad.size:
        raise DomainError(f"block {bad[0] + 1}: a^2 s2/alpha w'Rw >= 1")
    return -obj.value(w)


def solve_model1(spec: Model1Spec, beliefs: ReturnBeliefs, a, constraints=None, *,
                 tol=1e-10, max_iter=10_000) -> AllocationResult:
    obj = _model1_marginal(spec, beliefs, a)
    w, report = solve_marginal(obj, constraints, tol=tol, max_iter=max_iter)
    return AllocationResult(w, -report.objective, {"block_margins": obj.margins(w).tolist()},
                            report)


# ---------------------------------------------------------------------------
# Model 2
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Model2Spec:
    """One noisy variance, equicorrelation blocks with coefficients ``rho[i, j]``."""

    structure: BlockStructure
    sigma_min_sq: float
    sigma_sq: float
    alpha: float
    rho: np.ndarray

    def __post_init__(self):
        k = self.structure.n_blocks
        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != (k, k):
            raise ValueError(f"rho must be {k}x{k}")
        if np.max(np.abs(rho - rho.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("rho must be symmetric")
        if np.any(np.abs(rho) >= 1.0):
            raise ValueError("correlations must lie in (-1, 1)")
        for i, m in enumerate(self.structure.sizes):
            if m > 1 and rho[i, i] <= -1.0 / (m - 1):
                raise NotPositiveDefiniteError(
                    f"block {i + 1}: rho {rho[i, i]:.6g} <= -1/(m-1) for m = {m}",
                    min_eigenvalue=1.0 + (m - 1) * rho[i, i])
        if not (self.sigma_sq > 0 and self.alpha > 0 and self.sigma_min_sq >= 0):
            raise ValueError("need sigma_sq > 0, alpha > 0 and sigma_min_sq >= 0")
        rho = rho.copy()
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        lam = block_correlation_min_eigenvalue(rho, self.structure.sizes)
        if lam <= PSD_TOL:
            raise NotPositiveDefiniteError(f"block correlation matrix is not positive definite "
                                           f"(min eigenvalue {lam:.3g})", min_eigenvalue=lam)


def block_correlation_min_eigenvalue(rho, sizes) -> float:
    """Smallest eigenvalue of the assembled Model 2 correlation matrix in O(K^3).

    Vectors summing to zero inside block ``i`` are eigenvectors with
    eigenvalue ``1 - rho_ii``; on block-constant vectors the matrix acts as
    ``diag(1 - rho_ii) + D^1/2 rho D^1/2`` with ``D = diag(m)``.
    """
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(sizes, dtype=float)
    r = np.sqrt(m)
    lam = float(np.linalg.eigvalsh(np.diag(1.0 - np.diag(rho)) + np.outer(r, r) * rho).min())
    inner = 1.0 - np.diag(rho)[m > 1]
    return min(lam, float(inner.min())) if inner.size else lam


def upper_triangle_to_matrix(rows) -> np.ndarray:
    """Symmetric ``K x K`` matrix from rows ``[rho_11..rho_1K], [rho_22..rho_2K], ...``."""
    k = len(rows)
    out = np.zeros((k, k))
    for i, row in enumerate(rows):
        if len(row) != k - i:
            raise ValueError(f"row {i} of the upper triangle must have {k - i} entries")
        out[i, i:] = row
        out[i:, i] = row
    return out


def assemble_block_correlation(spec: Model2Spec) -> np.ndarray:
    """Dense ``N x N`` correlation matrix of Model 2, verified positive definite.

    Raises
    ------
    NotPositiveDefiniteError
        Carrying the smallest eigenvalue.
    """
    lab = spec.structure.assignments - 1
    R = spec.rho[np.ix_(lab, lab)].copy()
    np.fill_diagonal(R, 1.0)
    lam = float(np.linalg.eigvalsh(R).min())
    if lam <= PSD_TOL:
        raise NotPositiveDefiniteError(f"block correlation matrix is not positive definite "
                                       f"(min eigenvalue {lam:.3g})", min_eigenvalue=lam)
    return R


def contracted_correlation(rho, sizes) -> np.ndarray:
    """``E'RE`` for equal weights within blocks: ``w'Rw = b'(E'RE)b``.

    Off-diagonal entries ``m_i m_j rho_ij``; diagonal ``m_i (1 + (m_i - 1) rho_ii)``.
    """
    rho = np.asarray(rho, dtype=float)
    m = np.asarray(sizes, dtype=float)
    C = np.outer(m, m) * rho
    np.fill_diagonal(C, m * (1.0 + (m - 1.0) * np.diag(rho)))
    return C


def _is_block_constant(x, structure, rtol=1e-12):
    for i in range(structure.n_blocks):
        v = x[structure.members(i)]
        if np.ptp(v) > rtol * max(np.max(np.abs(v)), 1e-300):
            return False
    return True


def _reduced_constraints(cs, structure):
    # decision variables are block totals t_i = m_i b_i, so the budget keeps
    # unit coefficients and per-asset bounds scale by the block size
    if cs is None or cs.is_unconstrained:
        return cs
    if cs.epigraph:
        raise ValueError("epigraph constraints are not supported for block models")
    n, m = structure.n_assets, structure.sizes.astype(float)
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (n,)) if b is not None else None
              for b in (cs.lower, cs.upper))
    out = []
    for b in (lo, hi):
        if b is None:
            out.append(None)
            continue
        if not _is_block_constant(np.where(np.isfinite(b), b, 0.0), structure):
            raise SymmetryViolationError("bounds are not constant within blocks")
        first = np.array([b[structure.members(i)[0]] for i in range(structure.n_blocks)])
        out.append(m * first)
    return ConstraintSet(out[0], out[1], cs.budget, cs.nonneg)


def model2_objective(spec: Model2Spec, beliefs: ReturnBeliefs, a, w) -> float:
    """Marginalized Model 2 objective in certainty-equivalent units.

    Raises
    ------
    DomainError
        If ``a^2 s2/alpha w'Rw >= 1``.
    """
    R = assemble_block_correlation(spec)
    obj = MarginalObjective(beliefs.mu0, beliefs.sigma0 + spec.sigma_min_sq * R,
                            [(None, spec.sigma_sq * R, spec.alpha)], a)
    f = obj.value(np.asarray(w, dtype=float))
    if not np.isfinite(f):
        raise DomainError("a^2 s2/alpha w'Rw >= 1")
    return -f


def solve_model2(spec: Model2Spec, beliefs: ReturnBeliefs, a, constraints=None, *,
                 mode="auto", tol=1e-10, max_iter=10_000) -> AllocationResult:
    """Maximize the Model 2 objective in full or symmetry-reduced form.

    Parameters
    ----------
    mode : {"auto", "reduced", "full"}
        ``reduced`` optimizes the ``K`` block totals and spreads each total
        evenly over its block; it needs block-constant ``mu0`` and
        ``Sigma0`` (and bounds). ``auto`` reduces whenever that holds.

    Returns
    -------
    AllocationResult
        ``diagnostics["block_weights"]`` holds the per-asset weight of each
        block (meaningful when the solution is block-constant).

    Raises
    ------
    SymmetryViolationError
        If ``mode="reduced"`` and the beliefs are not block-constant.
    """
    s = spec.structure
    if beliefs.dim != s.n_assets:
        raise ValueError(f"beliefs have {beliefs.dim} assets, structure has {s.n_assets}")
    if mode not in ("auto", "reduced", "full"):
        raise ValueError("mode must be auto, reduced or full")
    symmetric = (_is_block_constant(beliefs.mu0, s)
                 and _is_block_constant(beliefs.sigma0_diag, s))
    if mode == "reduced" and not symmetric:
        raise SymmetryViolationError("mu0 and sigma0 must be constant within each block")
    reduce = mode == "reduced" or (mode == "auto" and symmetric)
    if reduce:
        try:
            rcs = _reduced_constraints(constraints, s)
        except SymmetryViolationError:
            if mode == "reduced":
                raise
            reduce = False
    m = s.sizes.astype(float)
    if reduce:
        first = np.array([s.members(i)[0] for i in range(s.n_blocks)])
        C = contracted_correlation(spec.rho, m) / np.outer(m, m)
        Q = np.diag(beliefs.sigma0_diag[first] / m) + spec.sigma_min_sq * C
        obj = MarginalObjective(beliefs.mu0[first], Q, [(None, spec.sigma_sq * C, spec.alpha)], a)
        t, report = solve_marginal(obj, rcs, tol=tol, max_iter=max_iter)
        b = t / m
        w = b[s.assignments - 1]
    else:
        R = assemble_block_correlation(spec)
        Q = beliefs.sigma0 + spec.sigma_min_sq * R
        obj = MarginalObjective(beliefs.mu0, Q, [(None, spec.sigma_sq * R, spec.alpha)], a)
        w, report = solve_marginal(obj, constraints, tol=tol, max_iter=max_iter)
        b = np.array([w[s.members(i)].mean() for i in range(s.n_blocks)])
    diag = {"block_weights": b, "mode": "reduced" if reduce else "full",
            "dimension": s.n_blocks if reduce else s.n_assets}
    return AllocationResult(w, -report.objective, diag, report)
