"""Exception types shared across the package."""


class GsmError(Exception):
    """Base class for all errors raised by gsmoments."""


class InputError(GsmError):
    """Invalid user input: malformed files, bad identifiers, bad arguments."""


class DegenerateError(GsmError):
    """The requested computation is degenerate for this data.

    Examples: constant phenotype, zero-variance statistic, a beta fit at
    the variance boundary. Batch drivers downgrade these to per-set
    warnings; direct callers see the exception.
    """
