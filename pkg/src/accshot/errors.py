"""Exception hierarchy shared by every module.

The CLI maps the three top-level families onto exit codes: validation
problems exit 1, numerical failures exit 2, I/O and parse failures exit 3.
"""


class AccShotError(Exception):
    """Base class for all package errors."""


class ValidationError(AccShotError, ValueError):
    """A parameter or input violates a documented precondition."""


class NumericalError(AccShotError, ArithmeticError):
    """A computation produced a non-finite value or could not be certified."""


class NonFinite(NumericalError):
    pass


class UnconvergedRho(NumericalError):
    """The spectral radius estimate is not converged but is required."""


class DataError(ValidationError):
    """Malformed dataset or matrix."""


class ZeroColumn(DataError):
    def __init__(self, j):
        super().__init__(f"column {j} has no nonzero entries")
        self.column = j


class EmptyDataset(DataError):
    pass


class ParseError(DataError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class IndexOutOfRange(ParseError):
    pass


class UnsortedIndices(ParseError):
    pass


class DuplicateIndex(ParseError):
    pass
