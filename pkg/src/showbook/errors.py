"""Exception hierarchy shared by every showbook module.

Anything derived from :class:`ShowbookError` is a data or model problem and
maps to exit status 1 on the command line.
"""


class ShowbookError(Exception):
    """Base class for data and model errors."""


class ConfigError(ShowbookError):
    """A key/value config file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class SchemaMismatch(ShowbookError):
    def __init__(self, message, missing=(), unexpected=()):
        super().__init__(message)
        self.missing = tuple(missing)
        self.unexpected = tuple(unexpected)


class DataTypeError(ShowbookError, TypeError):
    """A token in a numeric column is not a number."""

    def __init__(self, column, row, token):
        super().__init__(f"column {column!r}, row {row}: {token!r} is not numeric")
        self.column = column
        self.row = row
        self.token = token


class InvalidStatus(ShowbookError, ValueError):
    def __init__(self, column, row, token):
        super().__init__(f"column {column!r}, row {row}: unknown booking status {token!r}")
        self.column = column
        self.row = row
        self.token = token


class EmptyFile(ShowbookError):
    pass


class AllMissingColumn(ShowbookError):
    pass


class MissingGroupColumn(ShowbookError):
    pass


class MissingValues(ShowbookError):
    """A learner that cannot route missing values was given some."""


class CalibrationFailure(ShowbookError):
    pass


class TooFewRows(ShowbookError):
    pass


class EmptyClass(ShowbookError):
    pass


class SingleClass(ShowbookError):
    pass


class DegenerateTarget(SingleClass):
    pass


class LengthMismatch(ShowbookError, ValueError):
    pass


class EmptyShownSubset(ShowbookError):
    pass


class CorruptBundle(ShowbookError):
    pass


class ModelFormatError(ShowbookError):
    pass


class InvalidParams(ShowbookError, ValueError):
    pass


class UnseenCategoryWarning(UserWarning):
    """Rows carried category labels that were absent at training time."""


class NonConvergenceWarning(UserWarning):
    pass
