"""Single-view centroid localization: Gaussian heatmaps, density-peak search, detector oracle."""

# Import built-in modules
from dataclasses import dataclass
import json
import logging
import os
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np
from scipy.spatial import cKDTree

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.geometry import ProjectionGeometry


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

REFINE_HALF_WINDOW = 2  # 5x5 window
DELTA_NEIGHBOURS = 16
# Pixels below this intensity never enter the density-peak search
DENSITY_FLOOR = 0.05


@dataclass(frozen=True)
class Detection2D:
    """A detected centroid in detector millimetres about the detector center."""

    uv: Tuple[float, float]
    score: float = 1.0
    view_index: int = 0

    def __post_init__(self):
        if not np.isfinite(self.score) or self.score < 0:
            raise DataError(f"detection score must be finite and >= 0, got {self.score}")
        if not np.all(np.isfinite(self.uv)):
            raise DataError(f"detection uv must be finite, got {self.uv}")


@dataclass(frozen=True, eq=False)
class Heatmap2D:
    """Heatmap values in [0, 1], shape ``(nv, nu)``.

    ``geometry`` (optional) converts peak pixels to detector millimetres;
    without it, pixel ``(col, row)`` is reported relative to the image
    center at 1 mm pitch.
    """

    values: np.ndarray
    geometry: Optional[ProjectionGeometry] = None
    view_index: int = 0

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError(f"heatmap must be 2D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)) or self.values.min(initial=0) < 0 or self.values.max(initial=0) > 1:
            raise DataError("heatmap values must be finite and within [0, 1]")
        if self.geometry is not None:
            nu, nv = self.geometry.detector_shape
            if self.values.shape != (nv, nu):
                raise DataError(f"heatmap {self.values.shape} does not match detector ({nv}, {nu})")

    @property
    def dims(self) -> Tuple[int, int]:
        """``(nu, nv)``."""
        nv, nu = self.values.shape
        return nu, nv

    def pixel_to_uv(self, pixel: np.ndarray) -> np.ndarray:
        if self.geometry is not None:
            return self.geometry.pixel_to_uv(pixel)
        nu, nv = self.dims
        return np.asarray(pixel, dtype=np.float64) - np.array([(nu - 1) / 2.0, (nv - 1) / 2.0])


@dataclass
class DetectorOracleSpec:
    """Noise model of the stand-in localization network."""

    noise_sigma_px: float = 0.0
    p_miss: float = 0.0
    p_spurious: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma_px < 0:
            raise ConfigError(f"noise_sigma_px must be >= 0, got {self.noise_sigma_px}")
        for name in ("p_miss", "p_spurious"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ConfigError(f"{name} must be in [0, 1), got {value}")


def synth_heatmap(centroids: Sequence[Sequence[float]], dims: Tuple[int, int], sigma_px: float = 4.0,
                  geometry: Optional[ProjectionGeometry] = None, view_index: int = 0) -> Heatmap2D:
    """Pixelwise max of unnormalized Gaussians ``exp(-r² / 2σ²)``.

    Args:
        centroids: Continuous pixel coordinates ``(col, row)``.
        dims: ``(nu, nv)``.
        sigma_px: Kernel width in pixels.
        geometry: Optional view attached to the heatmap.
        view_index: View index attached to the heatmap.

    Raises:
        ConfigError: If ``sigma_px`` is not positive.
    """
    if sigma_px <= 0:
        raise ConfigError(f"heatmap sigma must be > 0 px, got {sigma_px}")
    nu, nv = dims
    values = np.zeros((nv, nu))
    cols = np.arange(nu, dtype=np.float64)
    rows = np.arange(nv, dtype=np.float64)
    for col, row in centroids:
        gx = np.exp(-((cols - col) ** 2) / (2.0 * sigma_px**2))
        gy = np.exp(-((rows - row) ** 2) / (2.0 * sigma_px**2))
        np.maximum(values, np.outer(gy, gx), out=values)
    return Heatmap2D(values=values, geometry=geometry, view_index=view_index)


def _nearest_higher_distance(points: np.ndarray, threads: int) -> np.ndarray:
    """δ for points sorted by strictly decreasing density rank.

    Neighbours come from a k-d tree in distance order, so the first one
    with a smaller rank is the nearest higher point. ``k`` grows for the
    few points (local maxima) whose first ``k`` neighbours are all lower.
    The first point has no higher neighbour and gets ``inf``.
    """
    n = len(points)
    delta = np.full(n, np.inf)
    if n < 2:
        return delta
    tree = cKDTree(points)
    pending = np.arange(1, n)
    k = DELTA_NEIGHBOURS
    while pending.size:
        k = min(k, n)
        dist, idx = tree.query(points[pending], k=k, workers=threads)
        higher = idx < pending[:, None]
        found = higher.any(axis=1)
        first = higher.argmax(axis=1)
        delta[pending[found]] = dist[found, first[found]]
        pending = pending[~found]
        k *= 4
    return delta


def _refine(values: np.ndarray, row: int, col: int) -> Tuple[float, float]:
    """Background-subtracted intensity-weighted centroid over a 5x5 window."""
    nv, nu = values.shape
    r0, r1 = max(0, row - REFINE_HALF_WINDOW), min(nv, row + REFINE_HALF_WINDOW + 1)
    c0, c1 = max(0, col - REFINE_HALF_WINDOW), min(nu, col + REFINE_HALF_WINDOW + 1)
    window = values[r0:r1, c0:c1]
    weights = window - window.min()
    total = weights.sum()
    if total <= 0:
        return float(col), float(row)
    rr, cc = np.mgrid[r0:r1, c0:c1]
    return float((weights * cc).sum() / total), float((weights * rr).sum() / total)


def find_peaks(heatmap: Heatmap2D, rho_min: float = 0.3, delta_min_px: float = 10.0,
               threads: int = 1) -> List[Detection2D]:
    """Density-peak search on a heatmap.

    Pixel intensity is the density ρ. Pixels are ranked by (ρ descending,
    linear index ascending); δ is the distance to the nearest pixel of
    higher rank, and the top-ranked pixel gets the image diagonal. Pixels
    with ``ρ >= rho_min`` and ``δ >= delta_min_px`` become detections,
    refined to sub-pixel precision and scored by ρ.

    Only pixels with ``ρ >= max(rho_min, DENSITY_FLOOR)`` take part. Lower
    pixels can never outrank a candidate, so below the floor nothing but
    the candidate set changes.

    Args:
        heatmap: Heatmap to search.
        rho_min: Density threshold.
        delta_min_px: Separation threshold in pixels.
        threads: Workers for the k-d tree queries; does not affect the result.

    Raises:
        ConfigError: If a threshold is negative.
    """
    if rho_min < 0 or delta_min_px < 0:
        raise ConfigError(f"peak thresholds must be >= 0, got rho_min={rho_min}, delta_min_px={delta_min_px}")
    values = heatmap.values
    flat = values.ravel()
    candidates = np.flatnonzero(flat >= max(rho_min, DENSITY_FLOOR))
    if candidates.size == 0:
        return []

    # Stable sort on -ρ keeps ascending linear index among equal densities
    order = candidates[np.argsort(-flat[candidates], kind="stable")]
    nv, nu = values.shape
    rows, cols = np.divmod(order, nu)
    points = np.stack([cols, rows], axis=1).astype(np.float64)
    delta = _nearest_higher_distance(points, threads)
    delta[0] = float(np.hypot(nu, nv))

    detections = []
    for idx in np.flatnonzero(delta >= delta_min_px):
        row, col = int(rows[idx]), int(cols[idx])
        ref_col, ref_row = _refine(values, row, col)
        u, v = heatmap.pixel_to_uv(np.array([ref_col, ref_row]))
        detections.append(Detection2D(uv=(float(u), float(v)), score=float(values[row, col]),
                                      view_index=heatmap.view_index))
    logger.debug("View %d: %d candidates, %d peaks", heatmap.view_index, candidates.size, len(detections))
    return detections


def oracle_detect(gt: Sequence[Sequence[float]], spec: DetectorOracleSpec, view_index: int = 0,
                  geometry: Optional[ProjectionGeometry] = None) -> List[Detection2D]:
    """Simulate a localization network from ground-truth detector points.

    Each point is dropped with ``p_miss``, otherwise jittered by
    ``N(0, σ²)`` per axis (σ in pixels, scaled by the detector pitch);
    ``Poisson(p_spurious)`` uniform spurious points are appended. The
    RNG stream is keyed by ``(seed, view_index)``.

    Args:
        gt: Ground-truth ``(u, v)`` in mm.
        spec: Noise model.
        view_index: View the detections belong to.
        geometry: Supplies pitch and detector extent; 1 mm pitch and a
            512 x 512 detector otherwise.
    """
    rng = np.random.default_rng([spec.seed, view_index])
    pitch = np.asarray(geometry.pitch) if geometry is not None else np.ones(2)
    if geometry is not None:
        half = np.asarray(geometry.half_extent_mm)
    else:
        half = np.array([256.0, 256.0])

    detections = []
    for uv in gt:
        # Draw every variate so one point's outcome never shifts another's noise
        missed = rng.random() < spec.p_miss
        jitter = rng.normal(0.0, 1.0, size=2) * spec.noise_sigma_px * pitch
        if missed:
            continue
        point = np.asarray(uv, dtype=np.float64) + jitter
        detections.append(Detection2D(uv=(float(point[0]), float(point[1])), view_index=view_index))

    for _ in range(rng.poisson(spec.p_spurious) if spec.p_spurious > 0 else 0):
        point = rng.uniform(-half, half)
        detections.append(Detection2D(uv=(float(point[0]), float(point[1])), view_index=view_index))
    return detections


def save_detections(detections: Sequence[Detection2D], path: PathLike) -> None:
    """Write ``[{"view": k, "uv_mm": [u, v], "score": s}, ...]``."""
    payload = [{"view": d.view_index, "uv_mm": list(d.uv), "score": d.score} for d in detections]
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def load_detections(path: PathLike) -> List[Detection2D]:
    """Read detections written by :func:`save_detections`.

    Raises:
        DataError: If the file is missing or malformed.
    """
    if not os.path.exists(path):
        raise DataError(f"detections file not found: {path}")
    try:
        with open(path) as f:
            payload = json.load(f)
        return [Detection2D(uv=tuple(float(x) for x in d["uv_mm"]), score=float(d["score"]),
                            view_index=int(d["view"])) for d in payload]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed detections file {path}: {e}")


def detect_view(gt: Sequence[Sequence[float]], geometry: ProjectionGeometry, spec: DetectorOracleSpec,
                sigma_px: float = 4.0, rho_min: float = 0.3, delta_min_px: float = 10.0,
                threads: int = 1) -> List[Detection2D]:
    """Oracle detections rendered as a heatmap, then recovered by peak search.

    This is the full single-view localization path: the oracle plays the
    network's regressed centroids and :func:`find_peaks` reads them back.
    """
    raw = oracle_detect(gt, spec, view_index=geometry.view_index, geometry=geometry)
    pixels = [geometry.uv_to_pixel(d.uv) for d in raw]
    heatmap = synth_heatmap(pixels, geometry.detector_shape, sigma_px, geometry=geometry,
                            view_index=geometry.view_index)
    return find_peaks(heatmap, rho_min=rho_min, delta_min_px=delta_min_px, threads=threads)
