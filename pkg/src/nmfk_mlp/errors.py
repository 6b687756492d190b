"""Exception hierarchy.

Every error raised by the library derives from :class:`NmfkError`. The
``exit_code`` attribute is what the command line returns when the error
escapes a subcommand (2 for bad data, 3 for numerical failure).
"""


class NmfkError(Exception):
    exit_code = 2


class DataError(NmfkError, ValueError):
    """Input data violates a documented precondition."""


class NumericalError(NmfkError, ArithmeticError):
    exit_code = 3


class NegativeEntries(DataError):
    pass


class ConstantVector(DataError):
    pass


class ZeroVector(DataError):
    pass


class ZeroData(DataError):
    pass


class RankTooLarge(DataError):
    pass


class DegenerateInput(DataError):
    pass


class DegenerateColumns(NumericalError):
    pass


class NonPositiveError(NumericalError):
    pass


class RejectionBudgetExceeded(DataError):
    pass


class TooFewRecords(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class FormatError(DataError):
    pass


class NormalizationMismatch(DataError):
    pass


class Divergence(NumericalError):
    pass


class ScanError(NmfkError):
    """Wraps a failure inside a scan with the offending K."""

    def __init__(self, k, cause):
        super().__init__(f"scan failed at K={k}: {cause}")
        self.k = k
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
