"""Exception hierarchy shared by every module of the package."""


class TrackingError(Exception):
    """Base class for all errors raised by cvmtrack."""

    category = "tracking"


class DegenerateInputError(TrackingError, ValueError):
    """A linearization point is singular (e.g. near-zero speed)."""

    category = "degenerate-input"


class ConditioningError(TrackingError, ArithmeticError):
    """A matrix that must be SPD is not, or a normal-equation solve failed."""

    category = "conditioning"


class ConfigurationError(TrackingError, ValueError):
    """Invalid scenario, topology or run configuration."""

    category = "config"
