"""Exception types shared across the library."""


class StructuralError(ValueError):
    """Malformed input: bad indices, inconsistent shapes, broken file headers."""


class SingularityError(ArithmeticError):
    """A factorization hit a zero pivot or an exactly singular operator."""


class NumericError(RuntimeError):
    """A numerical routine diverged or produced non-finite values."""
