"""CT volume model, file I/O and trilinear resampling."""

# Import built-in modules
from dataclasses import dataclass
import json
import logging
import os
from pathlib import Path
from typing import Tuple
from typing import Union

# Import third-party modules
from numba import njit
import numpy as np
from scipy import ndimage

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError


logger = logging.getLogger(__name__)

MU_WATER = 0.02  # 1/mm

PathLike = Union[str, "os.PathLike[str]"]
Vec3 = Tuple[float, float, float]

_HEADER_FIELDS = ("dims", "spacing_mm", "origin_mm", "dtype", "units")


def hu_to_mu(hu: np.ndarray) -> np.ndarray:
    """Linear water-scaled attenuation, clamped at zero."""
    return np.maximum(MU_WATER * (1.0 + np.asarray(hu, dtype=np.float64) / 1000.0), 0.0)


@dataclass(frozen=True, eq=False)
class Volume3:
    """Axis-aligned voxel grid of attenuation values (1/mm).

    ``data`` has shape ``(nz, ny, nx)`` so that its C-order layout is
    x-fastest, matching the raw file payload. ``origin`` is the world
    position of the center of voxel (0, 0, 0).
    """

    data: np.ndarray
    spacing: Vec3 = (1.0, 1.0, 1.0)
    origin: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise DataError(f"volume data must be 3D with every dim >= 1, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise DataError("volume contains non-finite values")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise DataError(f"spacing must be three positive values, got {self.spacing}")
        if len(self.origin) != 3 or not np.all(np.isfinite(self.origin)):
            raise DataError(f"origin must be three finite values, got {self.origin}")
        data = data.view()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dims(self) -> Tuple[int, int, int]:
        """Voxel counts ``(nx, ny, nz)``."""
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    @property
    def extent(self) -> Tuple[np.ndarray, np.ndarray]:
        """World-space bounding box of the voxel centers."""
        lo = np.asarray(self.origin)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        return lo, hi

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.extent
        return (lo + hi) / 2.0

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        """Continuous ``(ix, iy, iz)`` voxel coordinates of world points."""
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.origin)) / np.asarray(self.spacing)

    def index_to_world(self, ijk: np.ndarray) -> np.ndarray:
        return np.asarray(ijk, dtype=np.float64) * np.asarray(self.spacing) + np.asarray(self.origin)


@njit(nogil=True, cache=True)
def trilinear_at(data: np.ndarray, fx: float, fy: float, fz: float) -> float:
    """Trilinear value at continuous voxel index ``(fx, fy, fz)`` of ``data[z, y, x]``.

    Zero outside the physical box ``[-0.5, n - 0.5]`` on any axis; between
    the outermost voxel centers and the box faces the edge value holds.
    """
    nz, ny, nx = data.shape
    inside = -0.5 <= fx <= nx - 0.5 and -0.5 <= fy <= ny - 0.5 and -0.5 <= fz <= nz - 0.5
    if not inside:
        return 0.0
    fx = min(max(fx, 0.0), nx - 1.0)
    fy = min(max(fy, 0.0), ny - 1.0)
    fz = min(max(fz, 0.0), nz - 1.0)
    x0, y0, z0 = int(fx), int(fy), int(fz)
    x1, y1, z1 = min(x0 + 1, nx - 1), min(y0 + 1, ny - 1), min(z0 + 1, nz - 1)
    wx, wy, wz = fx - x0, fy - y0, fz - z0
    c00 = data[z0, y0, x0] * (1.0 - wx) + data[z0, y0, x1] * wx
    c01 = data[z0, y1, x0] * (1.0 - wx) + data[z0, y1, x1] * wx
    c10 = data[z1, y0, x0] * (1.0 - wx) + data[z1, y0, x1] * wx
    c11 = data[z1, y1, x0] * (1.0 - wx) + data[z1, y1, x1] * wx
    c0 = c00 * (1.0 - wy) + c01 * wy
    c1 = c10 * (1.0 - wy) + c11 * wy
    return c0 * (1.0 - wz) + c1 * wz


@njit(nogil=True, cache=True)
def _sample_points(data: np.ndarray, ijk: np.ndarray) -> np.ndarray:
    out = np.empty(ijk.shape[0])
    for i in range(ijk.shape[0]):
        out[i] = trilinear_at(data, ijk[i, 0], ijk[i, 1], ijk[i, 2])
    return out


def sample_trilinear(volume: Volume3, points: np.ndarray) -> Union[float, np.ndarray]:
    """Trilinear interpolation at world points.

    Points outside the volume (beyond half a voxel past the outermost
    voxel centers) are air and sample 0.

    Args:
        volume: Volume to sample.
        points: A single point ``(3,)`` or an ``(N, 3)`` array in mm.

    Returns:
        A float for a single point, else an ``(N,)`` array.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    ijk = np.ascontiguousarray(volume.world_to_index(np.atleast_2d(pts)))
    values = _sample_points(np.ascontiguousarray(volume.data), ijk)
    return float(values[0]) if single else values


def resample_isotropic(volume: Volume3, target: float = 1.0) -> Volume3:
    """Resample onto an isotropic grid covering the same world extent.

    The output grid shares the input origin and extends as far as whole
    ``target`` steps fit inside the input voxel-center hull.

    Raises:
        ConfigError: If ``target`` is not positive.
    """
    if target <= 0:
        raise ConfigError(f"resampling target must be > 0 mm, got {target}")
    lo, hi = volume.extent
    counts = np.floor((hi - lo) / target + 1e-9).astype(int) + 1
    nx, ny, nz = (int(c) for c in counts)
    logger.debug("Resampling %s @ %s mm -> %s @ %.3f mm", volume.dims, volume.spacing, (nx, ny, nz), target)

    scale = target / np.asarray(volume.spacing)
    grid = np.meshgrid(
        np.arange(nz) * scale[2], np.arange(ny) * scale[1], np.arange(nx) * scale[0], indexing="ij"
    )
    data = ndimage.map_coordinates(
        np.asarray(volume.data, dtype=np.float64), grid, order=1, mode="nearest"
    )
    return Volume3(data=data, spacing=(target, target, target), origin=volume.origin)


def _header_path(path: PathLike) -> Path:
    path = Path(path)
    return path if path.suffix == ".json" else path.with_suffix(".json")


def save_volume(volume: Volume3, path: PathLike) -> Path:
    """Write ``<name>.json`` + ``<name>.raw`` in attenuation units.

    Returns:
        Path: The header path.
    """
    header_path = _header_path(path)
    raw_path = header_path.with_suffix(".raw")
    header = {
        "dims": list(volume.dims),
        "spacing_mm": list(volume.spacing),
        "origin_mm": list(volume.origin),
        "dtype": "f32le",
        "units": "mu_per_mm",
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    with open(header_path, "w") as f:
        json.dump(header, f, indent=2)
    np.ascontiguousarray(volume.data, dtype="<f4").tofile(raw_path)
    logger.debug("Saved volume %s to: %s", volume.dims, header_path)
    return header_path


def load_volume(path: PathLike) -> Volume3:
    """Load a header+raw volume, converting HU to attenuation if needed.

    Args:
        path: The ``.json`` header, or the shared stem of the pair.

    Raises:
        DataError: Missing files, malformed header, payload size mismatch
            or non-finite values.
    """
    header_path = _header_path(path)
    raw_path = header_path.with_suffix(".raw")
    for required in (header_path, raw_path):
        if not required.exists():
            raise DataError(f"volume file not found: {required}")

    try:
        with open(header_path) as f:
            header = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"failed to parse volume header {header_path}: {e}")

    missing = [key for key in _HEADER_FIELDS if key not in header]
    if missing:
        raise DataError(f"volume header {header_path} missing fields: {missing}")
    if header["dtype"] != "f32le":
        raise DataError(f"unsupported dtype {header['dtype']!r}, expected 'f32le'")
    if header["units"] not in ("hu", "mu_per_mm"):
        raise DataError(f"unsupported units {header['units']!r}")
    try:
        dims = [int(d) for d in header["dims"]]
        spacing = tuple(float(s) for s in header["spacing_mm"])
        origin = tuple(float(o) for o in header["origin_mm"])
    except (TypeError, ValueError) as e:
        raise DataError(f"malformed volume header {header_path}: {e}")
    if len(dims) != 3 or min(dims) < 1:
        raise DataError(f"dims must be three values >= 1, got {dims}")

    payload = np.fromfile(raw_path, dtype="<f4")
    expected = dims[0] * dims[1] * dims[2]
    if payload.size != expected:
        raise DataError(f"raw payload has {payload.size} values, header declares {expected}")
    if not np.all(np.isfinite(payload)):
        raise DataError(f"raw payload {raw_path} contains non-finite values")

    data = payload.reshape(dims[2], dims[1], dims[0])
    if header["units"] == "hu":
        data = hu_to_mu(data)
    logger.debug("Loaded volume %s (%s) from: %s", dims, header["units"], header_path)
    return Volume3(data=data, spacing=spacing, origin=origin)
