"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class UnsupportedOrderError(InvalidInputError):
    """Raised when a spherical-harmonics order exceeds what is supported."""


class AmbiguousAxisError(InvalidInputError):
    """Raised when a minimal rotation between two directions is not unique."""


class DivergenceError(RuntimeError):
    """Raised when an optimization produces a non-finite loss."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration
