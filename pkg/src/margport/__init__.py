"""CARA-utility portfolio allocation with uncertain covariances and means."""

from .core import (AllocationResult, PortfolioProblem, ReturnBeliefs, TransactionCost,
                   apply_transaction_cost, cara_utility, gaussian_expected_utility)
from .estimators import BlockPortfolio, MinimaxPortfolio, TwoStatePortfolio, WishartPortfolio
from .exceptions import (ConvergenceError, DivergenceWarning, DomainError, IllConditionedWarning,
                         InfeasibleError, InsufficientDataWarning, MargportError,
                         MargportWarning, MultipleRootsWarning, NotPositiveDefiniteError,
                         SchemaError, SingularMatrixError, SymmetryViolationError,
                         ZeroVarianceWarning)
from .solver import ConstraintSet, SolveReport, Status, minimize
from .wishart import WishartAllocProblem, scaling_g_laplace, scaling_g_wishart

__version__ = "0.1.0"

__all__ = [
    "AllocationResult", "PortfolioProblem", "ReturnBeliefs", "TransactionCost",
    "apply_transaction_cost", "cara_utility", "gaussian_expected_utility",
    "BlockPortfolio", "MinimaxPortfolio", "TwoStatePortfolio", "WishartPortfolio",
    "ConvergenceError", "DivergenceWarning", "DomainError", "IllConditionedWarning",
    "InfeasibleError", "InsufficientDataWarning", "MargportError", "MargportWarning",
    "MultipleRootsWarning", "NotPositiveDefiniteError", "SchemaError", "SingularMatrixError",
    "SymmetryViolationError", "ZeroVarianceWarning",
    "ConstraintSet", "SolveReport", "Status", "minimize",
    "WishartAllocProblem", "scaling_g_laplace", "scaling_g_wishart",
]
