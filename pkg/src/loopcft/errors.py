"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class AccuracyError(RuntimeError):
    """Requested accuracy not reached; carries the best partial value."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SamplingError(RuntimeError):
    """A stochastic construction failed (e.g. step cap exceeded)."""


class ConfigError(ValueError):
    """Invalid experiment or estimator configuration."""


class InputError(ValueError):
    """Structurally invalid input data (missing weights, bad shapes)."""


class AmbiguousPointError(ValueError):
    """Query point too close to a curve for a grid-based topology test."""
