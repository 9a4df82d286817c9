"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An operation was called with input that violates its contract."""


class InfeasibleTrainingError(ValueError):
    """Training window too short to give every source a pilot slot."""


class InfeasibleLinkError(ValueError):
    """A link has zero effective gain; no finite power meets the target."""


class DecodeError(ValueError):
    """A serialized feedback record is malformed."""


class ConfigError(ValueError):
    """An experiment configuration file is invalid."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
