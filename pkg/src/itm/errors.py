"""Exception hierarchy shared across the package."""


class ItmError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(ItmError):
    """A file does not conform to the ITMF binary layout or manifest schema."""


class ValidationError(ItmError):
    """Data violates a structural invariant (label range, finiteness, shapes)."""


class ArgumentError(ItmError, ValueError):
    """A caller-supplied argument is out of its documented domain."""


class StateError(ItmError):
    """An operation was applied to an object in the wrong state."""


class ConfigurationError(ItmError):
    """A configuration combination is contradictory or undefined."""


class NumericError(ItmError):
    """A computation produced non-finite values; carries diagnostics in the message."""
