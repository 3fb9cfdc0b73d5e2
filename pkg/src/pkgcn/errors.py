"""Exception hierarchy shared across the package."""


class PkGcnError(Exception):
    """Base class for all pkgcn errors."""


class ShapeError(PkGcnError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class InputError(PkGcnError, ValueError):
    """Input values are out of the accepted domain (e.g. bad labels)."""


class ConfigError(PkGcnError, ValueError):
    """Invalid configuration or hyperparameters."""


class FormatError(PkGcnError, ValueError):
    """A binary file does not conform to its expected format."""


class NumericError(PkGcnError, ArithmeticError):
    """Non-finite values appeared where finite numbers are required."""


class StateError(PkGcnError, RuntimeError):
    """An operation was called with stale or mismatched cached state."""


class UsageError(PkGcnError, ValueError):
    """A command was invoked on an unsuitable artifact."""
