"""Exception types raised by the public API."""


class PulsegateError(ValueError):
    """Base class for input and configuration errors."""


class InvalidSubsystemError(PulsegateError):
    """A subsystem definition is unusable (too few levels, bad counts)."""


class ProblemTooLargeError(PulsegateError):
    """Composite Hilbert-space dimension exceeds the configured cap."""


class InvalidGateError(PulsegateError):
    """A target gate matrix is malformed or not unitary."""


class ConfigError(PulsegateError):
    """A problem configuration document failed validation."""
