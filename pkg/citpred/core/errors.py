"""Exception hierarchy shared by the library and the command-line surface.

Each error carries the process exit status the CLI reports for it.
"""
from typing import Optional


class CitPredError(Exception):
    """Base class for every error raised on purpose by citpred."""

    exit_code: int = 1


class ConfigError(CitPredError):
    exit_code = 4


class MissingFileError(CitPredError, FileNotFoundError):
    exit_code = 3


class DimensionMismatchError(CitPredError):
    """Checkpoint or tensor dimensions disagree with the active RunConfig."""

    exit_code = 5


class ShapeError(CitPredError, ValueError):
    exit_code = 5


class DataFormatError(CitPredError, ValueError):
    exit_code = 6


class TrackFormatError(DataFormatError):
    """A malformed row in a track table."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class UnknownFormatError(DataFormatError):
    pass


class WindowError(DataFormatError):
    """A trajectory window is too short or has the wrong length."""


class CacheFormatError(DataFormatError):
    pass


class TrainingDivergedError(CitPredError):
    exit_code = 7


class HorizonMismatchError(CitPredError, ValueError):
    exit_code = 8
