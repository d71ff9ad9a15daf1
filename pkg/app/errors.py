"""Exception hierarchy shared by the simulator, the CLI and the HTTP layer."""

from pathlib import Path
from typing import Optional


class OccSimError(ValueError):
    """Base class for every domain failure raised by the simulator."""


class ConfigError(OccSimError):
    """Invalid or inconsistent configuration."""


class InputError(OccSimError):
    """Arguments that violate an operation's preconditions."""


class EmptyPopulationError(OccSimError):
    """A population of zero occupants was requested."""


class DatasetParseError(OccSimError):
    """A dataset or weather file row could not be parsed."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
        self.row = row
        self.column = column


class LabelError(DatasetParseError):
    """A preference label string is not one of cooler / no_change / warmer."""


class WeatherFormatError(DatasetParseError):
    """Weather series is malformed (bad schema or non-increasing time)."""


class PoolError(OccSimError):
    """Not enough distinct occupants to draw the requested candidates."""


class DegenerateDatasetError(OccSimError):
    """Dataset carries a single class, so impurity decreases are undefined."""


class TrainingError(OccSimError):
    """The boosted-tree learner cannot be fit on the given data."""


class ShapeError(OccSimError):
    """Feature matrix does not match the model's feature layout."""


class LayoutError(OccSimError):
    """Occupant is not part of the model's feature layout."""


class ColdStartError(OccSimError):
    """A committee was requested before any label exists."""


class UndefinedEffortError(OccSimError):
    """Labelling effort requested with zero candidates."""


class OutputError(OccSimError):
    """Writing or reading a results artifact failed."""

    def __init__(self, message: str, path: Path):
        super().__init__(f"{path}: {message}")
        self.path = path
