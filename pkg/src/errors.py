"""
Exception hierarchy for sarctl

Library code raises these; the CLI maps them to exit codes.
"""

from typing import Optional


class SarError(Exception):
    """Base class for every error raised by sarctl"""

    exit_code = 1


class InvalidInputError(SarError, ValueError):
    """Input violates an operation's precondition"""


class EstimationError(SarError):
    """Doppler slope or spectrum estimation could not produce a value"""


class FittingError(SarError):
    """Maximum-likelihood iteration did not converge"""


class ConfigError(SarError):
    """Config file could not be parsed or validated"""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class StageError(SarError):
    """A pipeline stage failed; earlier stage outputs are kept"""

    exit_code = 3

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class ImageFormatError(SarError, OSError):
    """Image file has a bad header, wrong size or unsupported dimensions"""

    exit_code = 4


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the documented CLI exit code"""
    if isinstance(exc, StageError):
        # I/O failures inside a stage still report as I/O errors
        if isinstance(exc.cause, OSError):
            return ImageFormatError.exit_code
        if isinstance(exc.cause, ConfigError):
            return ConfigError.exit_code
        return StageError.exit_code
    if isinstance(exc, SarError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return 4
    return 1
