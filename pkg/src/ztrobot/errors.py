"""Exception types raised across the package."""


class ZTRobotError(Exception):
    """Base class for all package errors."""


class TiltOutOfRange(ZTRobotError, ValueError):
    pass


class DimensionMismatch(ZTRobotError, ValueError):
    pass


class SingularJacobian(ZTRobotError, ArithmeticError):
    pass


class DegenerateInput(ZTRobotError, ValueError):
    """Zero commanded motion or zero load where a ratio needs both."""


class BadWeights(ZTRobotError, ValueError):
    pass


class NoTasks(ZTRobotError, ValueError):
    pass


class NonFiniteJacobian(ZTRobotError, FloatingPointError):
    pass


class BadId(ZTRobotError, ValueError):
    pass


class ReachFailure(ZTRobotError, RuntimeError):
    pass


class EmptyInput(ZTRobotError, ValueError):
    pass


class ConfigError(ZTRobotError, ValueError):
    """Raised for schema or semantic problems in a configuration file."""
