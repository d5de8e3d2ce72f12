"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems -> 1, I/O -> 2,
numeric failures -> 3.
"""


class PlacebgError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PlacebgError, ValueError):
    """An argument violates its documented precondition."""


class ShapeError(InvalidInputError):
    """Image or parameter dimensions do not line up."""


class InvalidStateError(PlacebgError, RuntimeError):
    """An object is not in a state that supports the requested operation."""


class DegenerateNormalizerError(PlacebgError, ArithmeticError):
    """A normalizer has too few samples or zero spread to standardize a value."""


class CorpusError(PlacebgError, OSError):
    """A corpus file is missing, unreadable or malformed."""
