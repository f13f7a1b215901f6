"""Exception types shared across the package."""


class MagloopError(Exception):
    """Base class for package errors."""


class ConfigError(MagloopError):
    """Experiment configuration is malformed or out of range."""


class DegenerateLoop(MagloopError):
    """A loop with zero length was passed where a curve is required."""


class NotConcatenable(MagloopError):
    """Two loops share no common vertex within tolerance."""


class NoNegativeLoopFound(MagloopError):
    """The geometry admits no sweep family with negative terminal action."""


class InvalidOracleInput(MagloopError):
    """Reference-value request outside the oracle's domain."""
