"""Exception hierarchy shared by the pricing modules and the CLI."""


class HobError(Exception):
    """Base class for all library errors."""


class ValidationError(HobError, ValueError):
    """An input violates a documented constraint.

    ``field`` names the offending input so callers (and the CLI) can report it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ParseError(HobError, ValueError):
    """Contract text could not be decoded."""


class DimensionMismatch(ValidationError):
    pass


class NonIncreasingExpiries(ValidationError):
    pass


class TimeAfterFirstExpiry(ValidationError):
    pass


class MissingDate(HobError, KeyError):
    pass


class NumericalError(HobError, ArithmeticError):
    """Base for failures of a numerical procedure on otherwise valid input."""


class NotPositiveDefinite(NumericalError):
    pass


class NonConvergent(NumericalError):
    pass


class RootNotBracketed(NumericalError):
    pass


class ExtensionNeverOptimal(NumericalError):
    pass
