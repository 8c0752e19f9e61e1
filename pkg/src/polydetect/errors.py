"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


class NumericError(ArithmeticError):
    """A numerical procedure failed; ``residual`` carries the last achieved value."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class QuadratureError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class ConditioningError(NumericError):
    """Linear system too ill-conditioned to solve reliably."""

    def __init__(self, message, condition=None):
        super().__init__(message, residual=condition)
        self.condition = condition
