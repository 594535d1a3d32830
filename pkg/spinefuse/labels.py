"""Vertebra labels and 3D centroid annotations."""

# Import built-in modules
from dataclasses import dataclass
import json
import logging
import os
from typing import List
from typing import Sequence
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError


logger = logging.getLogger(__name__)

DEFAULT_CATEGORIES = 26

# Canonical order for the default 26 categories
_CANONICAL_NAMES = (
    [f"C{i}" for i in range(1, 8)]
    + [f"T{i}" for i in range(1, 14)]
    + [f"L{i}" for i in range(1, 7)]
)

PathLike = Union[str, "os.PathLike[str]"]


def label_names(c: int = DEFAULT_CATEGORIES) -> List[str]:
    """Return the canonical names for labels 1..c."""
    if c == DEFAULT_CATEGORIES:
        return list(_CANONICAL_NAMES)
    return [f"V{i}" for i in range(1, c + 1)]


@dataclass(frozen=True, order=True)
class VertebraLabel:
    """A vertebra category, 1-based.

    With the default 26 categories, index 1 is C1 and index 26 is L6.
    """

    index: int
    c: int = DEFAULT_CATEGORIES

    def __post_init__(self):
        if self.c < 1:
            raise ConfigError(f"category count must be >= 1, got {self.c}")
        if not 1 <= self.index <= self.c:
            raise ConfigError(f"label index {self.index} outside [1, {self.c}]")

    @property
    def name(self) -> str:
        return label_names(self.c)[self.index - 1]

    @classmethod
    def from_name(cls, name: str, c: int = DEFAULT_CATEGORIES) -> "VertebraLabel":
        """Parse a canonical label name.

        Raises:
            DataError: If ``name`` is not a known label for ``c`` categories.
        """
        names = label_names(c)
        try:
            return cls(names.index(name.strip().upper()) + 1, c)
        except ValueError:
            raise DataError(f"unknown vertebra label {name!r} for {c} categories")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Annotation3:
    """Ground-truth vertebra centroids in world millimetres, sorted by label."""

    entries: Tuple[Tuple[VertebraLabel, Tuple[float, float, float]], ...]

    def __post_init__(self):
        indices = [label.index for label, _ in self.entries]
        if len(set(indices)) != len(indices):
            raise DataError(f"duplicate labels in annotation: {indices}")
        if indices != sorted(indices):
            raise DataError("annotation entries must be sorted by label index")
        for label, center in self.entries:
            if len(center) != 3 or not np.all(np.isfinite(center)):
                raise DataError(f"non-finite center for {label}: {center}")

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[VertebraLabel, Sequence[float]]]) -> "Annotation3":
        ordered = sorted(pairs, key=lambda pair: pair[0].index)
        return cls(tuple((label, tuple(float(x) for x in center)) for label, center in ordered))

    @property
    def labels(self) -> List[VertebraLabel]:
        return [label for label, _ in self.entries]

    @property
    def centers(self) -> np.ndarray:
        """(n, 3) array of centers."""
        if not self.entries:
            return np.zeros((0, 3))
        return np.array([center for _, center in self.entries], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)


def save_annotation(annotation: Annotation3, path: PathLike) -> None:
    """Write an annotation as ``[{"label": "T4", "center_mm": [x, y, z]}, ...]``."""
    payload = [
        {"label": label.name, "center_mm": [float(x) for x in center]}
        for label, center in annotation.entries
    ]
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
    logger.debug("Saved %d annotation entries to: %s", len(payload), path)


def load_annotation(path: PathLike, c: int = DEFAULT_CATEGORIES) -> Annotation3:
    """Read an annotation JSON file.

    Raises:
        DataError: If the file is missing or malformed.
    """
    if not os.path.exists(path):
        raise DataError(f"annotation file not found: {path}")
    try:
        with open(path) as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"failed to parse annotation JSON {path}: {e}")
    if not isinstance(payload, list):
        raise DataError(f"annotation {path} must be a JSON array")

    pairs = []
    for entry in payload:
        try:
            label = VertebraLabel.from_name(str(entry["label"]), c)
            center = [float(x) for x in entry["center_mm"]]
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed annotation entry {entry!r}: {e}")
        pairs.append((label, center))
    return Annotation3.from_pairs(pairs)
