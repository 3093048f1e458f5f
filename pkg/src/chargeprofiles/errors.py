"""Error types shared across the package.

The CLI maps these onto exit codes: InputError (and subclasses) -> 1,
NumericFault -> 2, OSError -> 3.
"""


class InputError(ValueError):
    """Invalid user-supplied data or configuration."""


class DimensionError(InputError):
    """Array shapes or lengths do not agree."""


class NumericFault(ArithmeticError):
    """A computation produced a non-finite value or exceeded a numeric gate."""
