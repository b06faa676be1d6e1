"""Exception hierarchy shared across the package."""


class JointCountError(Exception):
    """Base class for all package errors."""


class DomainError(JointCountError, ValueError):
    """A parameter lies outside the admissible domain of a distribution or copula."""


class InputError(JointCountError, ValueError):
    """Malformed numeric input (NaN, wrong range)."""


class TauRangeError(DomainError):
    """Kendall's tau is outside the range a copula family can attain."""


class LinkError(DomainError):
    """The inverse link was asked for a value on or beyond the domain boundary."""


class NumericError(JointCountError, ArithmeticError):
    """A numerical routine produced a non-finite or inconsistent value."""


class StructuralError(JointCountError, ValueError):
    """Dimension mismatch, rank deficiency or otherwise inconsistent structure."""


class DataError(JointCountError, ValueError):
    """Invalid data values (negative counts, odds below one, missing values)."""


class ConfigError(JointCountError, ValueError):
    """Invalid model specification or study configuration."""
