"""Errors raised by the library, each one tied to a command line exit code."""

from typing import Optional


class ChivesselError(Exception):
    """Base class of every error raised on purpose by the package."""

    exit_code = 1


class InvalidParameterError(ChivesselError, ValueError):
    """Error to be raised when a parameter breaks the invariants of its type."""

    exit_code = 2

    def __init__(self, name: str, value: object, requirement: str) -> None:
        """Error initialization function."""
        self.name = name
        super().__init__(f"`{name}` = {value!r} is invalid: {requirement}.")


class ConfigError(ChivesselError, ValueError):
    """Error to be raised when a config or scene file can't be used."""

    exit_code = 2

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        """Error initialization function."""
        self.field = field
        self.line = line
        location = ""
        if field is not None:
            location += f" [field `{field}`]"
        if line is not None:
            location += f" [line {line}]"
        super().__init__(f"{message}{location}")


class VolumeReadError(ChivesselError, OSError):
    """Error to be raised when an input volume is missing or unreadable."""

    exit_code = 3

    def __init__(self, path: object, reason: str) -> None:
        """Error initialization function."""
        self.path = path
        super().__init__(f"Can't read `{path}`: {reason}.")


class EmptyRegionError(ChivesselError, ValueError):
    """Error to be raised when a statistic is requested over no voxels."""

    exit_code = 3

    def __init__(self, what: str) -> None:
        """Error initialization function."""
        super().__init__(f"The {what} is empty.")


class GeometryMismatchError(ChivesselError, ValueError):
    """Error to be raised when two grids don't share dims and spacing."""

    exit_code = 4

    def __init__(self, first: str, second: str, detail: str) -> None:
        """Error initialization function."""
        super().__init__(f"Geometry of {first} doesn't match {second}: {detail}.")


class VolumeWriteError(ChivesselError, OSError):
    """Error to be raised when an output can't be written."""

    exit_code = 5

    def __init__(self, path: object, reason: str) -> None:
        """Error initialization function."""
        self.path = path
        super().__init__(f"Can't write `{path}`: {reason}.")
