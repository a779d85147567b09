"""Exception taxonomy shared across the package."""


class HlsmmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(HlsmmError, ValueError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class DataError(HlsmmError, ValueError):
    """A data file could not be ingested: parse failure, bad format, bad labels."""


class NumericalError(HlsmmError, RuntimeError):
    """The solver hit a numerical failure (non-finite values, broken descent).

    Carries the iteration index at which the failure occurred, when known.
    """

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
