"""Exception hierarchy shared by every spinefuse module."""

# Import built-in modules
from typing import Sequence


class SpineFuseError(Exception):
    """Base exception for spinefuse errors."""

    exit_code = 1


class ConfigError(SpineFuseError):
    """Invalid configuration, flag or parameter precondition."""

    exit_code = 2


class DataError(SpineFuseError):
    """Malformed, missing or inconsistent input data."""

    exit_code = 3


class NumericError(SpineFuseError):
    """A computation hit a singular or degenerate configuration."""

    exit_code = 4


class ProjectionSingularError(NumericError):
    """A point lies at or behind the source plane of a view."""


class DegenerateGeometryError(NumericError):
    """A bundle of back-projected lines is too close to parallel to intersect.

    Attributes:
        views: View indices that contributed the offending lines.
        condition: Condition number of the normal matrix.
    """

    def __init__(self, message: str, views: Sequence[int] = (), condition: float = float("inf")):
        super().__init__(message)
        self.views = tuple(views)
        self.condition = condition


class AnchorInfeasibleError(NumericError):
    """A consecutive label chain anchored at the last row would run below label 1."""

    def __init__(self, message: str, anchor: int, n: int):
        super().__init__(message)
        self.anchor = anchor
        self.n = n
