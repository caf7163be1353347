"""Exception types raised by gbmap"""

from typing import Optional


class GbmapError(Exception):
    """Base class for all gbmap errors"""


class InvalidArgumentError(GbmapError, ValueError):
    """An argument violates an operation's precondition"""


class InvalidStateError(GbmapError, RuntimeError):
    """An operation was called on an object in the wrong state"""


class NumericError(GbmapError, ArithmeticError):
    """A numeric computation failed and could not be recovered"""


class DataError(GbmapError, ValueError):
    """Input data could not be ingested or does not match the expected schema.

    Args:
        message: Description of the problem
        row: 1-based data row (header excluded), if known
        column: Offending column name, if known
    """

    def __init__(
        self, message: str, row: Optional[int] = None, column: Optional[str] = None
    ):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class ModelFileError(DataError):
    """A model file is unreadable, corrupt or of an unsupported version"""
