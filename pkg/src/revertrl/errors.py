class NumericalError(RuntimeError):
    """A loss, gradient or parameter became non-finite."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""


class TrainingAborted(RuntimeError):
    """Training stopped before any finite checkpoint could be recorded."""
