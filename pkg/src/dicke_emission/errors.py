"""Exception hierarchy shared by all modules."""


class DickeEmissionError(Exception):
    """Base class for package errors."""


class DomainError(DickeEmissionError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(DickeEmissionError, ValueError):
    """Invalid run configuration or simulation parameters."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EventFileError(DickeEmissionError):
    """Malformed event file."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class EventFileVersionError(EventFileError):
    """Event file written with an unsupported format version."""

    def __init__(self, version, offset=4):
        self.version = version
        super().__init__(f"unsupported event file version {version}", offset)


class CorruptEventError(DickeEmissionError, ValueError):
    """An event record carries out-of-range fields."""


class FitError(DickeEmissionError):
    """The fit objective is degenerate or the fit could not be performed."""


class ArchiveError(DickeEmissionError):
    """Unreadable or inconsistent histogram archive."""
