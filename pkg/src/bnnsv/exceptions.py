class BNNError(Exception):
    """Base class for all package errors."""


class DimensionError(BNNError, ValueError):
    pass


class StateCorruptionError(BNNError, ValueError):
    """A sampler state violates one of its invariants."""


class NumericalSingularityError(BNNError, ArithmeticError):
    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class InsufficientDrawsError(BNNError, ValueError):
    pass


class DegenerateTestError(BNNError, ValueError):
    pass


class SchemaError(BNNError, ValueError):
    """Input file does not match the documented layout."""


class ConfigError(BNNError, ValueError):
    pass


class SweepError(BNNError):
    def __init__(self, sweep, cause):
        super().__init__(f"sweep {sweep} failed: {cause}")
        self.sweep = sweep
        self.cause = cause
