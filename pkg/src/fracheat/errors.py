"""Exception types shared across the package."""


class FracHeatError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(FracHeatError, ValueError):
    pass


class SingularityError(FracHeatError, ValueError):
    pass


class DomainError(FracHeatError, ValueError):
    """A point lies on the wrong side of a domain for the requested operation."""


class UnsupportedOperationError(FracHeatError, NotImplementedError):
    pass


class NumericError(FracHeatError, ArithmeticError):
    """Quadrature failed to converge; ``residual`` carries the last error estimate."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BudgetExceededError(FracHeatError):
    """Requested tolerance not reached within the path budget.

    ``partial`` holds the best estimate obtained so far.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
