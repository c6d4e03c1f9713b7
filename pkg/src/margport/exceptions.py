"""Exception and warning classes raised across the package."""


class MargportError(Exception):
    """Base class for all package errors."""


class DomainError(MargportError, ValueError):
    """An argument lies outside the domain where a quantity is finite.

    Raised, for example, when the log argument of a marginalized objective
    is non-positive (the marginalized utility diverges).
    """


class ConvergenceError(MargportError, RuntimeError):
    """An iterative routine exhausted its budget without converging."""


class SingularMatrixError(MargportError, ValueError):
    """A matrix that has to be inverted is singular or too ill-conditioned."""


class NotPositiveDefiniteError(MargportError, ValueError):
    """A covariance or correlation matrix failed the eigenvalue check."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InfeasibleError(MargportError, ValueError):
    """The constraint set is empty or does not intersect the objective domain."""


class SymmetryViolationError(MargportError, ValueError):
    """Block-symmetric reduction was requested for beliefs that break the symmetry."""


class SchemaError(MargportError, ValueError):
    """A JSON document does not follow the expected schema.

    ``pointer`` is a JSON pointer (RFC 6901) to the offending location.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class MargportWarning(UserWarning):
    """Base class for package warnings."""


class DivergenceWarning(MargportWarning):
    """Monte Carlo running mean behaves like a divergent integral."""


class MultipleRootsWarning(MargportWarning):
    """More than one admissible root or fixed point was found."""


class IllConditionedWarning(MargportWarning):
    """A matrix passed validation but is close to singular."""


class InsufficientDataWarning(MargportWarning):
    """A period was skipped because it has too few observations."""


class ZeroVarianceWarning(MargportWarning):
    """A period was skipped because a correlation is undefined."""
