"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """A value handed to an operation violates its preconditions."""


class ConfigurationError(ValueError):
    """A configuration constant is outside its legal range."""


class UsageError(RuntimeError):
    """An API was called out of order or with an incoherent state."""


class FormatError(ValueError):
    """A binary or text container failed to parse; message names the offset."""


class TrainingAbort(RuntimeError):
    """Training stopped because the loss became non-finite."""
