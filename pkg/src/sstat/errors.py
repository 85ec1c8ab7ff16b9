"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SstatError(Exception):
    """Base class for all errors raised by sstat."""


class InvalidRangeError(SstatError, ValueError):
    pass


class CsvParseError(SstatError, ValueError):
    """A field could not be parsed as a number.

    ``row`` is the 1-based data row (header excluded), ``column`` the 1-based
    field position, ``text`` the raw field text.
    """

    def __init__(self, row: int, column: int, text: str):
        self.row = row
        self.column = column
        self.text = text
        super().__init__(f"row {row}, column {column}: cannot parse {text!r} as a number")


class FieldCountError(SstatError, ValueError):
    def __init__(self, row: int, expected: int, found: int):
        self.row = row
        self.expected = expected
        self.found = found
        super().__init__(f"row {row}: expected {expected} fields, found {found}")


class HeaderMismatchError(SstatError, ValueError):
    pass


class BinaryFormatError(SstatError):
    """Bad magic, unsupported version or inconsistent header."""


class TruncatedFileError(BinaryFormatError):
    pass


class RowRangeError(SstatError, IndexError):
    pass


class SchemaMismatchError(SstatError, ValueError):
    pass


class NonFiniteValueError(SstatError, ValueError):
    def __init__(self, row: int, column: int, value: float):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-finite value {value!r} at row {row}, column {column}")


class ReductionError(SstatError):
    """A per-chunk task failed; carries the failing range."""

    def __init__(self, range_index: int, start_row: int, row_count: int, cause: BaseException):
        self.range_index = range_index
        self.start_row = start_row
        self.row_count = row_count
        self.cause = cause
        super().__init__(
            f"range {range_index} (rows {start_row}..{start_row + row_count - 1}) failed: {cause}"
        )


class CancellationError(SstatError, ArithmeticError):
    """Covariance diagonal is non-positive, so correlation is undefined.

    Typically the result of catastrophic cancellation in ``S - n*mu*mu^T``.
    """

    def __init__(self, columns: list[int], names: list[str] | None = None):
        self.columns = list(columns)
        self.names = list(names) if names is not None else None
        label = ", ".join(self.names) if self.names else ", ".join(map(str, self.columns))
        super().__init__(f"non-positive variance in column(s): {label}")
