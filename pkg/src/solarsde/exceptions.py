"""Exception hierarchy shared by all modules."""


class SolarSDEError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SolarSDEError, ValueError):
    """A state or parameter lies outside its admissible domain."""


class DataError(SolarSDEError, ValueError):
    """Input data violates a structural requirement (ordering, spacing, schema)."""


class ParseError(DataError):
    """A CSV row could not be parsed."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NumericalError(SolarSDEError, ArithmeticError):
    """A numerical routine produced a non-finite or degenerate result."""


class ConfigurationError(SolarSDEError, ValueError):
    """Solver or run configuration is unusable (e.g. grid too coarse)."""
