"""Perspective DRR rendering and 16-bit PGM image files."""

# Import built-in modules
from dataclasses import dataclass
import json
import logging
import os
from pathlib import Path
import time
from typing import Optional
from typing import Tuple
from typing import Union

# Import third-party modules
from numba import njit
import numpy as np

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.geometry import ProjectionGeometry
from spinefuse.parallel import parallel_map
from spinefuse.volume import Volume3
from spinefuse.volume import trilinear_at


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

RAYS_PER_BLOCK = 4096
PGM_MAXVAL = 65535


@dataclass(frozen=True, eq=False)
class DrrImage:
    """Line integrals ``∫μ ds`` on the detector, shape ``(nv, nu)``, row index along v."""

    geometry: ProjectionGeometry
    pixels: np.ndarray

    def __post_init__(self):
        nu, nv = self.geometry.detector_shape
        if self.pixels.shape != (nv, nu):
            raise DataError(f"DRR pixels {self.pixels.shape} do not match detector (nv, nu)=({nv}, {nu})")
        if not np.all(np.isfinite(self.pixels)) or np.any(self.pixels < 0):
            raise DataError("DRR pixels must be finite and non-negative")


def _ray_box_intervals(origin: np.ndarray, directions: np.ndarray, lengths: np.ndarray,
                       lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Slab clipping of rays ``origin + t * d``, ``t in [0, length]``, to a box."""
    parallel = directions == 0
    safe = np.where(parallel, 1.0, directions)
    t0 = (lo - origin) / safe
    t1 = (hi - origin) / safe
    t_near = np.minimum(t0, t1)
    t_far = np.maximum(t0, t1)
    # Axis-parallel rays: inside the slab means unbounded, outside means miss
    inside = (origin >= lo) & (origin <= hi)
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)
    enter = np.maximum(t_near.max(axis=1), 0.0)
    exit_ = np.minimum(t_far.min(axis=1), lengths)
    return enter, np.maximum(exit_, enter)


@njit(nogil=True, cache=True)
def _march_rays(data: np.ndarray, start: np.ndarray, stride: np.ndarray, counts: np.ndarray,
                step_mm: float, out: np.ndarray) -> None:
    """Midpoint-rule line integrals in voxel-index space.

    Ray ``r`` samples ``start[r] + j * stride[r]`` for ``j < counts[r]``;
    the per-ray sum runs in sample order regardless of how rays are split.
    """
    for r in range(counts.shape[0]):
        fx, fy, fz = start[r, 0], start[r, 1], start[r, 2]
        dx, dy, dz = stride[r, 0], stride[r, 1], stride[r, 2]
        total = 0.0
        for j in range(counts[r]):
            total += trilinear_at(data, fx + j * dx, fy + j * dy, fz + j * dz)
        out[r] = total * step_mm


def render_drr(volume: Volume3, geometry: ProjectionGeometry, step_mm: float = 0.5,
               threads: int = 1) -> DrrImage:
    """Render one DRR by uniform sampling along each source-to-pixel ray.

    Each ray is clipped to the volume box (voxel faces, not centers). A
    pixel holds ``step_mm * Σ μ(t_j)`` with midpoint samples
    ``t_j = t_enter + (j + 0.5) * step_mm`` over the clipped segment.

    Args:
        volume: Attenuation volume.
        geometry: View to render.
        step_mm: Sampling step along rays.
        threads: Worker count for ray blocks; does not affect the result.

    Raises:
        ConfigError: If ``step_mm`` is not positive.
    """
    if step_mm <= 0:
        raise ConfigError(f"ray step must be > 0 mm, got {step_mm}")
    start_time = time.perf_counter()
    nu, nv = geometry.detector_shape

    cols, rows = np.meshgrid(np.arange(nu), np.arange(nv))
    uv = geometry.pixel_to_uv(np.stack([cols.ravel(), rows.ravel()], axis=1))
    targets = geometry.uv_to_world(uv)
    source = geometry.source
    offsets = targets - source
    lengths = np.linalg.norm(offsets, axis=1)
    directions = offsets / lengths[:, None]

    spacing = np.asarray(volume.spacing)
    lo, hi = volume.extent
    enter, exit_ = _ray_box_intervals(source, directions, lengths, lo - spacing / 2, hi + spacing / 2)
    counts = np.ceil((exit_ - enter) / step_mm).astype(np.int64)

    pixels = np.zeros(nu * nv)
    if not counts.any() or not np.any(volume.data):
        logger.debug("View %d misses the volume or volume is empty", geometry.view_index)
        return DrrImage(geometry=geometry, pixels=pixels.reshape(nv, nu))

    data = np.ascontiguousarray(volume.data, dtype=np.float32)
    first = source + (enter + 0.5 * step_mm)[:, None] * directions
    start = np.ascontiguousarray((first - np.asarray(volume.origin)) / spacing)
    stride = np.ascontiguousarray(directions * step_mm / spacing)
    blocks = [(a, min(a + RAYS_PER_BLOCK, nu * nv)) for a in range(0, nu * nv, RAYS_PER_BLOCK)]

    def integrate(bounds: Tuple[int, int]) -> None:
        a, b = bounds
        _march_rays(data, start[a:b], stride[a:b], counts[a:b], step_mm, pixels[a:b])

    parallel_map(integrate, blocks, threads)
    logger.debug("Rendered view %d (%d x %d, %d samples) in %.2fs",
                 geometry.view_index, nu, nv, int(counts.sum()), time.perf_counter() - start_time)
    return DrrImage(geometry=geometry, pixels=np.maximum(pixels, 0.0).reshape(nv, nu))


def _pgm_header(width: int, height: int, maxval: int) -> bytes:
    return f"P5\n{width} {height}\n{maxval}\n".encode("ascii")


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def save_drr(image: DrrImage, path: PathLike, display: bool = False) -> Path:
    """Write a 16-bit P5 PGM plus a JSON sidecar holding scale and geometry.

    Pixel values are ``round(integral / scale)`` with ``scale = max / 65535``.

    Args:
        image: DRR to write.
        path: Target ``.pgm`` path.
        display: Also write ``<name>.display.pgm``, an 8-bit ``exp(-∫μ)`` preview.

    Returns:
        Path: The PGM path.
    """
    path = Path(path).with_suffix(".pgm")
    path.parent.mkdir(parents=True, exist_ok=True)
    peak = float(image.pixels.max())
    scale = peak / PGM_MAXVAL if peak > 0 else 1.0
    quantized = np.rint(image.pixels / scale).astype(">u2")
    nv, nu = image.pixels.shape
    with open(path, "wb") as f:
        f.write(_pgm_header(nu, nv, PGM_MAXVAL))
        f.write(quantized.tobytes())
    with open(_sidecar_path(path), "w") as f:
        json.dump({"scale": scale, "geometry": image.geometry.to_dict()}, f, indent=2)

    if display:
        preview = np.rint(255.0 * np.exp(-image.pixels)).astype(np.uint8)
        with open(path.with_suffix(".display.pgm"), "wb") as f:
            f.write(_pgm_header(nu, nv, 255))
            f.write(preview.tobytes())
    logger.debug("Saved DRR view %d to: %s (scale=%g)", image.geometry.view_index, path, scale)
    return path


def _read_pgm(path: Path) -> Tuple[np.ndarray, int]:
    raw = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise DataError(f"truncated PGM header in {path}")
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise DataError(f"{path} is not a binary PGM (P5)")
    width, height, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    payload = np.frombuffer(raw[pos + 1:], dtype=dtype)
    if payload.size != width * height:
        raise DataError(f"PGM {path} has {payload.size} samples, expected {width * height}")
    return payload.reshape(height, width), maxval


def load_drr(path: PathLike, geometry: Optional[ProjectionGeometry] = None) -> DrrImage:
    """Read a DRR written by :func:`save_drr`.

    Raises:
        DataError: If the image or its sidecar is missing or malformed.
    """
    path = Path(path)
    sidecar = _sidecar_path(path)
    for required in (path, sidecar):
        if not required.exists():
            raise DataError(f"DRR file not found: {required}")
    try:
        with open(sidecar) as f:
            meta = json.load(f)
        scale = float(meta["scale"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed DRR sidecar {sidecar}: {e}")
    if geometry is None:
        geometry = ProjectionGeometry.from_dict(meta.get("geometry", {}))
    values, _ = _read_pgm(path)
    return DrrImage(geometry=geometry, pixels=values.astype(np.float64) * scale)


def quantization_step(image: DrrImage) -> float:
    """Largest round-trip error of :func:`save_drr` for ``image``."""
    peak = float(image.pixels.max())
    return 0.5 * peak / PGM_MAXVAL if peak > 0 else 0.0

