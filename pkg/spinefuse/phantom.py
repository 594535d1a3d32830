"""Synthetic spine phantoms with exact centroid annotations."""

# Import built-in modules
from dataclasses import dataclass
import logging
from typing import Optional
from typing import Tuple

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.labels import Annotation3
from spinefuse.labels import DEFAULT_CATEGORIES
from spinefuse.labels import VertebraLabel
from spinefuse.volume import MU_WATER
from spinefuse.volume import Volume3


logger = logging.getLogger(__name__)


@dataclass
class PhantomSpec:
    """Parameters of a synthetic spine.

    Vertebra bodies are ellipsoids stacked along +z with consecutive labels
    starting at ``start_label``; label index grows with z.
    """

    n: int = 5
    spacing_mm: float = 30.0
    background_radius_mm: float = 60.0
    semi_axes_mm: Tuple[float, float, float] = (18.0, 14.0, 10.0)
    mu_vertebra: float = 0.04
    mu_tissue: float = MU_WATER
    start_label: int = 16
    c: int = DEFAULT_CATEGORIES
    curvature_mm: float = 0.0
    jitter_mm: float = 0.0
    metal_implant: bool = False
    voxel_mm: float = 1.0
    margin_mm: float = 10.0
    dims: Optional[Tuple[int, int, int]] = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"phantom needs at least one vertebra, got n={self.n}")
        if self.n > self.c:
            raise ConfigError(f"phantom vertebra count {self.n} exceeds category count {self.c}")
        if not 1 <= self.start_label <= self.c - self.n + 1:
            raise ConfigError(
                f"labels {self.start_label}..{self.start_label + self.n - 1} do not fit in [1, {self.c}]"
            )
        if self.spacing_mm <= 0 or self.background_radius_mm <= 0 or self.voxel_mm <= 0:
            raise ConfigError("phantom spacing, background radius and voxel size must be > 0")
        if any(a <= 0 for a in self.semi_axes_mm):
            raise ConfigError(f"semi-axes must be > 0, got {self.semi_axes_mm}")
        if self.jitter_mm < 0 or self.margin_mm < 0:
            raise ConfigError("jitter and margin must be >= 0")

    def required_size_mm(self) -> np.ndarray:
        """World extent ``(x, y, z)`` the phantom needs, margins included."""
        ax, ay, az = self.semi_axes_mm
        bow = abs(self.curvature_mm) + self.jitter_mm
        half_xy = max(self.background_radius_mm, max(ax, ay) + bow)
        length_z = (self.n - 1) * self.spacing_mm + 2 * az + self.jitter_mm
        return np.array(
            [2 * half_xy + 2 * self.margin_mm, 2 * half_xy + 2 * self.margin_mm, length_z + 2 * self.margin_mm]
        )


def _centers(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    offsets = np.arange(spec.n) - (spec.n - 1) / 2.0
    centers = np.zeros((spec.n, 3))
    centers[:, 2] = offsets * spec.spacing_mm
    if spec.n > 1 and spec.curvature_mm:
        t = offsets / ((spec.n - 1) / 2.0)
        centers[:, 0] = spec.curvature_mm * (1.0 - t**2)
    if spec.jitter_mm > 0:
        centers += rng.uniform(-spec.jitter_mm / 2.0, spec.jitter_mm / 2.0, size=centers.shape)
    return centers


def make_phantom(spec: PhantomSpec) -> Tuple[Volume3, Annotation3]:
    """Generate a phantom volume and its centroid annotation.

    The volume is centered on the world origin. Output depends only on
    ``spec``.

    Raises:
        ConfigError: If the geometry does not fit in ``spec.dims``.
    """
    rng = np.random.default_rng(spec.seed)
    centers = _centers(spec, rng)

    needed = np.ceil(spec.required_size_mm() / spec.voxel_mm).astype(int) + 1
    if spec.dims is None:
        dims = needed
    else:
        dims = np.asarray(spec.dims, dtype=int)
        if np.any(dims < needed):
            raise ConfigError(f"phantom needs at least {tuple(needed)} voxels, dims={tuple(dims)}")

    origin = -(dims - 1) / 2.0 * spec.voxel_mm
    z, y, x = (
        origin[axis] + np.arange(dims[axis]) * spec.voxel_mm for axis in (2, 1, 0)
    )
    zz, yy, xx = np.meshgrid(z, y, x, indexing="ij", sparse=True)

    data = np.zeros((dims[2], dims[1], dims[0]), dtype=np.float32)
    data[np.broadcast_to(xx**2 + yy**2 <= spec.background_radius_mm**2, data.shape)] = spec.mu_tissue

    ax, ay, az = spec.semi_axes_mm
    for cx, cy, cz in centers:
        inside = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 + ((zz - cz) / az) ** 2 <= 1.0
        data[inside] = spec.mu_vertebra

    if spec.metal_implant:
        # Pedicle-screw-like rod through the middle vertebra
        cx, cy, cz = centers[spec.n // 2]
        rod = ((yy - cy) ** 2 + (zz - cz) ** 2 <= 2.0**2) & (np.abs(xx - cx) <= ax)
        data[np.broadcast_to(rod, data.shape)] = 0.5

    labels = [VertebraLabel(spec.start_label + i, spec.c) for i in range(spec.n)]
    annotation = Annotation3.from_pairs(list(zip(labels, centers.tolist())))
    logger.debug("Generated phantom dims=%s with labels %s..%s", tuple(dims), labels[0], labels[-1])
    return Volume3(data=data, spacing=(spec.voxel_mm,) * 3, origin=tuple(origin)), annotation
