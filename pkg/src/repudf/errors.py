"""Exception types shared across the package."""


class RepUdfError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RepUdfError, ValueError):
    """Input data violates a precondition (empty cloud, degenerate scale, ...)."""


class InvalidArgumentError(RepUdfError, ValueError):
    """An argument is out of range or shapes are incompatible."""


class UndefinedGradientError(RepUdfError, ArithmeticError):
    """The distance-field gradient is undefined at the requested point."""


class NonFiniteError(RepUdfError, FloatingPointError):
    """A NaN or Inf appeared in a loss or gradient."""


class PlyParseError(RepUdfError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
