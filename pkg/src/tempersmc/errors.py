"""Exception types shared across the package."""


class NumericError(ArithmeticError):
    """A numerical routine produced an unusable value (non-positive
    information, quadrature failure, ...)."""


class DegenerateError(ValueError):
    """An input carries no usable statistical signal (all weights collapsed,
    zero-variance score, proposal identical to target where a contrast is
    required)."""


class BudgetExceededError(RuntimeError):
    """An iterative routine ran out of its step budget.

    The partial output computed so far is attached as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
