"""Exception types shared across the toolkit."""


class OmpsdError(Exception):
    """Base class for toolkit errors."""


class ConfigError(OmpsdError):
    """Invalid or inconsistent configuration input."""


class NumericsError(OmpsdError):
    """A numerical routine failed or refused to proceed."""


class CalibrationError(NumericsError):
    """Drive calibration could not bracket or fit the requested thresholds."""


class BoundaryLeakError(NumericsError):
    """Probability mass reached the edge of the computational grid."""
