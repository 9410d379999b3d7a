"""Exception types shared across the library."""


class InvalidArgumentError(ValueError):
    """Argument shapes, ranges, or dimensions do not match."""


class InvalidDataError(ValueError):
    """Input data violate a contract (non-finite values, zero propensity,
    reward outside [-1, 1] on ingestion)."""


class InvalidStateError(RuntimeError):
    """Operation called in a state where it is undefined (e.g. empty log)."""


class InsufficientDataError(InvalidStateError):
    """Not enough records to produce an estimate."""


class OptimizationFailedError(RuntimeError):
    """No finite objective value found anywhere in the search region."""


class InferenceUnavailableError(RuntimeError):
    """The bread matrix of the sandwich is numerically singular; more
    rounds of data are needed before tests can be run."""

    def __init__(self, message: str, condition_number: float = float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class PropensityFitError(RuntimeError):
    """The logistic propensity fit did not converge (e.g. perfect
    separation in the logged actions)."""


class ReplayInvalidError(RuntimeError):
    """Offline replay saw an importance ratio above the configured bound M,
    so the rejection-sampling acceptance probability would exceed 1."""
