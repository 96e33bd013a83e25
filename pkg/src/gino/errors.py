"""Exception hierarchy shared across the toolkit.

CLI exit-code mapping: ValidationError/ContractError -> 2, I/O errors -> 3,
DivergenceError (and FloatingPointError from finite checks) -> 4.
"""


class GinoError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(GinoError):
    """Bad user-supplied value: out-of-range parameter, malformed config."""


class ContractError(GinoError):
    """An internal call broke a documented precondition."""


class ShapeError(ContractError):
    """Tensor shapes incompatible with the requested operation."""


class DivergenceError(GinoError):
    """Training produced a non-finite loss."""
