"""Exception types shared across the package."""


class InputError(ValueError):
    """User-supplied data violates an operation's preconditions."""


class NumericError(RuntimeError):
    """A computation produced non-finite values or failed to converge.

    ``estimate`` optionally carries the last usable value (e.g. the final
    power-iteration estimate) for diagnostics.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
