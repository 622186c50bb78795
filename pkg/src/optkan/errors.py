"""Exception types shared across the package."""


class OptkanError(Exception):
    pass


class DomainError(OptkanError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class BoundaryError(DomainError):
    """Raised when a formula is evaluated exactly at expiry (T = 0)."""


class ShapeError(OptkanError, ValueError):
    pass


class ContractError(OptkanError, RuntimeError):
    """A calling contract was violated (e.g. backward on a non-scalar)."""


class DegenerateInputError(DomainError):
    pass


class ConvergenceError(OptkanError, RuntimeError):
    """An iterative fit stopped at its iteration cap.

    ``best`` carries the best parameters seen so far.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DivergenceError(OptkanError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DataError(OptkanError, ValueError):
    """Malformed input data (missing columns, bad numerics, empty file)."""
