"""Exception types shared across the package.

Numerical-failure exceptions are kept distinct from plain ``ValueError``
so that callers (in particular the command line driver) can map them to
a dedicated exit status.
"""


class ChifieldError(Exception):
    """Base class for all package-specific errors."""


class DomainError(ChifieldError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SeriesConvergenceError(ChifieldError, ArithmeticError):
    """A series evaluation hit its term budget before reaching tolerance."""

    def __init__(self, message: str, terms_used: int):
        super().__init__(message)
        self.terms_used = terms_used


class NotPositiveDefiniteError(ChifieldError, ArithmeticError):
    """A correlation matrix failed its Cholesky factorization.

    ``pivot`` is the 1-based order of the leading minor that is not
    positive definite, as reported by LAPACK.
    """

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class SingularSystemError(ChifieldError, ArithmeticError):
    """A linear system required by an estimator or predictor is singular."""


class NoPairsError(ChifieldError, ValueError):
    """A pairwise objective was requested but the cut-off left no pairs."""


class TooFewBlocksError(ChifieldError, ValueError):
    """Subsampling produced too few blocks for a stable covariance."""


class RankDeficientError(ChifieldError, ArithmeticError):
    """A regression design matrix does not have full column rank."""


class MissingPredecessorError(ChifieldError, ValueError):
    """A persistence forecast was requested where no prior value exists."""


class NotConvergedError(ChifieldError, ArithmeticError):
    """An iterative optimization failed to meet its convergence rule."""
