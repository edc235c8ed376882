"""Exception hierarchy shared across the package."""


class ReducrError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ReducrError, ValueError):
    """An argument violates an operation's precondition."""


class NumericError(ReducrError, ArithmeticError):
    """A computation left the representable/finite domain."""


class ConfigError(InvalidInputError):
    """A configuration file or value is invalid."""


class ParseError(InvalidInputError):
    """A data file could not be parsed.

    Carries the 1-based line number of the offending row when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
