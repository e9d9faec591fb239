"""Exception types shared across the package."""


class BetalinkError(Exception):
    """Base class for all package-specific errors."""


class DomainError(BetalinkError, ValueError):
    """An argument left the mathematical domain of an operation."""


class DataError(BetalinkError, ValueError):
    """Invalid input data or configuration (bad CSV cell, missing column, ...)."""


class NonConvergenceError(BetalinkError, RuntimeError):
    """The optimizer failed to converge from every attempted start.

    Carries the best attempt seen so its trace can be inspected or dumped.
    """

    def __init__(self, message, best_attempt=None):
        super().__init__(message)
        self.best_attempt = best_attempt


class SingularMatrixError(BetalinkError, RuntimeError):
    """A matrix that must be invertible for the requested quantity is singular."""
