"""Exception hierarchy shared by every engine component."""


class CleaningError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CleaningError):
    """Invalid run configuration: bad flag values, missing companion inputs."""


class DataError(CleaningError):
    """Malformed or inconsistent data: ragged CSV rows, out-of-order batches,
    statistics that do not line up with the store, and similar."""


class ParseError(CleaningError):
    """Syntax error in a constraint expression, annotated with its position."""

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        self.offset = offset
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
