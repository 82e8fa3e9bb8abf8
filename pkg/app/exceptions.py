from typing import Optional


class MoefError(Exception):
    """Base class for every error raised by the fusion engine."""


class DomainError(MoefError):
    """An argument lies outside the domain of the operation."""


class NumericalFailure(MoefError):
    """A computation produced nonfinite values that cannot be repaired."""


class SequenceError(MoefError):
    """Misaligned, mismatched or non-monotone sequences."""


class ConfigError(MoefError):
    """Invalid configuration value or unknown configuration key."""


class FileFormatError(MoefError):
    """A malformed input file; carries the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path:
            location += f"{path}"
        if line is not None:
            location += f":{line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)
