"""Exception hierarchy shared by the estimators and the command-line harness."""


class SplineDiffError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SplineDiffError, ValueError):
    """Invalid input data: bad grids, malformed CSV, length mismatches."""


class DomainError(SplineDiffError, ValueError):
    """Evaluation point outside the knot span (no extrapolation)."""


class OrderingError(DataError):
    """A streamed sample does not come strictly after the last knot."""


class NumericalError(SplineDiffError, ArithmeticError):
    """A linear system is singular, indefinite or too ill-conditioned to trust."""


class UnsupportedConfigurationError(SplineDiffError, ValueError):
    """Parameter combination the chosen algorithm cannot handle (e.g. lambda = 0)."""
