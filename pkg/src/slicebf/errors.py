"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``InputError`` -> 2,
``DegenerateDataError`` -> 3, ``CapacityError`` -> 4.
"""


class SliceBfError(Exception):
    """Base class for all errors raised by this package."""


class InputError(SliceBfError):
    """Malformed or unusable input (bad columns, non-finite response, ...)."""


class DegenerateDataError(InputError):
    """Input is well-formed but statistically degenerate.

    Examples: a covariate with a single observed level, zero residual
    variance where a test needs a noise estimate.  Subclasses
    ``InputError`` so callers that only distinguish "bad input" keep
    working; the CLI reports it with its own exit code.
    """


class CapacityError(SliceBfError):
    """A configured capacity guard was hit (enumeration size, super-variable levels)."""
