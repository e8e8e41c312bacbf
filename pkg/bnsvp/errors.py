"""Exception hierarchy for bnsvp.

Every error raised on purpose by the library derives from ``BnsvpError`` so
callers (and the CLI) can tell library failures apart from programming bugs.
"""


class BnsvpError(Exception):
    """Base class for all bnsvp errors."""


class ArgumentError(BnsvpError, ValueError):
    """Raised when an operation is called with arguments violating its preconditions."""


class ValidationError(BnsvpError, ValueError):
    """Raised when loaded or constructed data breaks a data-model invariant."""


class FormatError(BnsvpError, ValueError):
    """Raised when a feature file or manifest does not follow the on-disk format."""


class NumericError(BnsvpError, ArithmeticError):
    """Raised on numerical breakdown (non-SPD covariance, degenerate likelihoods)."""


class DegenerateSelectionError(ArgumentError):
    """Raised when the representative set is empty and the MIL loss is undefined."""
