"""Single-view identification: pixelwise class fields aggregated into per-vertebra probability maps."""

# Import built-in modules
from dataclasses import dataclass
from dataclasses import field
import json
import logging
import os
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.detect import Detection2D
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.geometry import ProjectionGeometry
from spinefuse.labels import DEFAULT_CATEGORIES


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

ROW_SUM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-vertebra class probabilities of one view, shape ``(n, c)``.

    Row ``i`` came from detection ``det_index[i]`` of the list passed to
    :func:`aggregate_probmap`; ``excluded`` lists detections that produced
    no row.
    """

    rows: np.ndarray
    view_index: int = 0
    det_index: Tuple[int, ...] = ()
    excluded: Tuple[int, ...] = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise DataError(f"probability map must be a non-empty (n, c) matrix, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)) or rows.min() < 0 or rows.max() > 1:
            raise DataError("probability map entries must lie in [0, 1]")
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise DataError("probability map rows must sum to 1")
        object.__setattr__(self, "rows", rows)
        if not self.det_index:
            object.__setattr__(self, "det_index", tuple(range(rows.shape[0])))
        elif len(self.det_index) != rows.shape[0]:
            raise DataError("det_index length must match the row count")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def c(self) -> int:
        return self.rows.shape[1]


def default_confusion(c: int = DEFAULT_CATEGORIES, epsilon: float = 0.05) -> np.ndarray:
    """Row-stochastic confusion with mass ``epsilon`` on each neighbouring label.

    Mass that would fall outside ``[1, c]`` stays on the diagonal.
    """
    if not 0 <= epsilon <= 0.5:
        raise ConfigError(f"confusion epsilon must be in [0, 0.5], got {epsilon}")
    confusion = np.eye(c) * (1.0 - 2.0 * epsilon)
    idx = np.arange(c - 1)
    confusion[idx, idx + 1] += epsilon
    confusion[idx + 1, idx] += epsilon
    confusion[0, 0] += epsilon
    confusion[c - 1, c - 1] += epsilon
    return confusion


@dataclass
class ClassifierOracleSpec:
    """Error model of the stand-in identification network.

    Attributes:
        c: Category count.
        epsilon: Neighbour confusion used when ``confusion`` is not given.
        confusion: Explicit ``(c, c)`` row-stochastic matrix.
        pixel_noise: Dirichlet concentration of the per-pixel perturbation;
            ``None`` disables the noise.
        seed: RNG seed.
    """

    c: int = DEFAULT_CATEGORIES
    epsilon: float = 0.0
    confusion: Optional[np.ndarray] = None
    pixel_noise: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.confusion is None:
            self.confusion = default_confusion(self.c, self.epsilon)
        self.confusion = np.asarray(self.confusion, dtype=np.float64)
        if self.confusion.shape != (self.c, self.c):
            raise ConfigError(f"confusion must be ({self.c}, {self.c}), got {self.confusion.shape}")
        if self.confusion.min() < 0 or np.any(np.abs(self.confusion.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ConfigError("confusion rows must be non-negative and sum to 1")
        if self.pixel_noise is not None and self.pixel_noise <= 0:
            raise ConfigError(f"Dirichlet concentration must be > 0, got {self.pixel_noise}")


class PixelProbField:
    """Per-pixel class distributions over an ``(nv, nu)`` detector.

    Rows are either stored or generated on demand by ``row_fn`` and cached;
    a generated row depends only on its index.
    """

    def __init__(self, dims: Tuple[int, int], c: int, row_fn: Optional[Callable[[int], np.ndarray]] = None,
                 values: Optional[np.ndarray] = None):
        self.dims = tuple(dims)
        self.c = c
        self._row_fn = row_fn
        self._rows: Dict[int, np.ndarray] = {}
        if values is not None:
            values = np.asarray(values, dtype=np.float64)
            nu, nv = self.dims
            if values.shape != (nv, nu, c):
                raise DataError(f"field values {values.shape} do not match ({nv}, {nu}, {c})")
            if np.any(np.abs(values.sum(axis=2) - 1.0) > ROW_SUM_TOL):
                raise DataError("pixel probabilities must sum to 1")
            self._values = values
        elif row_fn is None:
            raise DataError("a field needs stored values or a row generator")
        else:
            self._values = None

    @classmethod
    def from_array(cls, values: np.ndarray) -> "PixelProbField":
        """Wrap an ``(nv, nu, c)`` array."""
        nv, nu, c = np.shape(values)
        return cls((nu, nv), c, values=values)

    def row(self, r: int) -> np.ndarray:
        if self._values is not None:
            return self._values[r]
        cached = self._rows.get(r)
        if cached is None:
            cached = self._row_fn(r)
            self._rows[r] = cached
        return cached

    def block(self, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
        """Probabilities of rows ``r0:r1`` and columns ``c0:c1``."""
        if self._values is not None:
            return self._values[r0:r1, c0:c1]
        return np.stack([self.row(r)[c0:c1] for r in range(r0, r1)])


def oracle_field(gt_labels: np.ndarray, spec: ClassifierOracleSpec, view_index: int = 0) -> PixelProbField:
    """Simulate a segmentation network from a ground-truth label image.

    A pixel of class ``j`` gets confusion row ``j``; background (0) pixels
    get the uniform distribution. With ``pixel_noise`` set, each pixel's
    distribution is replaced by a Dirichlet draw with mean equal to it.
    Row ``r`` uses the RNG stream ``(seed, view_index, r)``.

    Args:
        gt_labels: ``(nv, nu)`` integer image, 0 for background, else 1..c.
        spec: Error model.
        view_index: View the field belongs to.
    """
    gt_labels = np.asarray(gt_labels)
    if gt_labels.ndim != 2:
        raise DataError(f"label image must be 2D, got shape {gt_labels.shape}")
    if gt_labels.min(initial=0) < 0 or gt_labels.max(initial=0) > spec.c:
        raise DataError(f"label image values must lie in [0, {spec.c}]")
    nv, nu = gt_labels.shape
    table = np.vstack([np.full(spec.c, 1.0 / spec.c), spec.confusion])

    def make_row(r: int) -> np.ndarray:
        base = table[gt_labels[r]]
        if spec.pixel_noise is None:
            return base
        rng = np.random.default_rng([spec.seed, view_index, r])
        draws = rng.gamma(spec.pixel_noise * base)
        totals = draws.sum(axis=1, keepdims=True)
        return np.where(totals > 0, draws / np.where(totals > 0, totals, 1.0), base)

    return PixelProbField((nu, nv), spec.c, row_fn=make_row)


def rasterize_labels(gt_uv: Sequence[Sequence[float]], labels: Sequence[int], geometry: ProjectionGeometry,
                     half_width_mm: float = 20.0) -> np.ndarray:
    """Ground-truth class image from projected centroids.

    The detector is split along v at midpoints between consecutive
    centroids; each band, limited to ``|u - u_i| <= half_width_mm``, takes
    the centroid's label. End bands reach half a neighbour spacing (or
    ``half_width_mm`` for a single vertebra) past their centroid.

    Returns:
        np.ndarray: ``(nv, nu)`` int image, 0 outside every band.
    """
    nu, nv = geometry.detector_shape
    image = np.zeros((nv, nu), dtype=np.int64)
    if len(gt_uv) == 0:
        return image
    pts = np.asarray(gt_uv, dtype=np.float64)
    order = np.argsort(pts[:, 1], kind="stable")
    pts = pts[order]
    lab = np.asarray(labels)[order]

    if len(pts) == 1:
        edges = np.array([pts[0, 1] - half_width_mm, pts[0, 1] + half_width_mm])
    else:
        mids = (pts[1:, 1] + pts[:-1, 1]) / 2.0
        edges = np.concatenate([[2 * pts[0, 1] - mids[0]], mids, [2 * pts[-1, 1] - mids[-1]]])

    pixel_uv = geometry.pixel_to_uv(np.stack(np.meshgrid(np.arange(nu), np.arange(nv)), axis=-1))
    u, v = pixel_uv[..., 0], pixel_uv[..., 1]
    for i, (center, label) in enumerate(zip(pts, lab)):
        band = (v >= edges[i]) & (v < edges[i + 1]) & (np.abs(u - center[0]) <= half_width_mm)
        image[band] = label
    return image


def sort_by_v(detections: Sequence[Detection2D], ascending: bool = True) -> List[Detection2D]:
    """Order detections along the spine by their v coordinate."""
    return sorted(detections, key=lambda d: d.uv[1], reverse=not ascending)


@dataclass
class AggregationReport:
    """Detections that produced no probability row."""

    excluded: List[int] = field(default_factory=list)
    messages: List[str] = field(default_factory=list)


def aggregate_probmap(prob_field: PixelProbField, detections: Sequence[Detection2D], geometry: ProjectionGeometry,
                      square_mm: float = 22.0, report: Optional[AggregationReport] = None) -> ProbMap:
    """Average pixel probabilities in an axis-aligned square around each detection.

    Pixels whose centers lie in the closed square count; squares are
    clipped at the image border. Rows follow the detection order.

    Args:
        prob_field: Pixelwise class probabilities.
        detections: Detections of this view, already in spine order.
        geometry: View geometry, for mm to pixel conversion.
        square_mm: Side of the square.
        report: Collects detections whose square holds no pixel.

    Raises:
        ConfigError: If ``square_mm`` is not positive or there are no detections.
        DataError: If every detection's square falls outside the image.
    """
    if square_mm <= 0:
        raise ConfigError(f"square side must be > 0 mm, got {square_mm}")
    if not detections:
        raise ConfigError("aggregate_probmap needs at least one detection")
    nu, nv = geometry.detector_shape
    half = square_mm / 2.0

    rows, kept, excluded = [], [], []
    for i, det in enumerate(detections):
        lo = geometry.uv_to_pixel(np.asarray(det.uv) - half)
        hi = geometry.uv_to_pixel(np.asarray(det.uv) + half)
        c0 = max(int(np.ceil(lo[0] - 1e-9)), 0)
        r0 = max(int(np.ceil(lo[1] - 1e-9)), 0)
        c1 = min(int(np.floor(hi[0] + 1e-9)), nu - 1) + 1
        r1 = min(int(np.floor(hi[1] + 1e-9)), nv - 1) + 1
        if c1 <= c0 or r1 <= r0:
            message = f"view {geometry.view_index}: square around {det.uv} holds no pixel"
            logger.warning("%s", message)
            excluded.append(i)
            if report is not None:
                report.excluded.append(i)
                report.messages.append(message)
            continue
        mean = prob_field.block(r0, r1, c0, c1).reshape(-1, prob_field.c).mean(axis=0)
        rows.append(mean / mean.sum())
        kept.append(i)

    if not rows:
        raise DataError(f"view {geometry.view_index}: no detection square intersects the image")
    return ProbMap(rows=np.array(rows), view_index=geometry.view_index, det_index=tuple(kept),
                   excluded=tuple(excluded))


def single_view_labels(pm: ProbMap) -> List[int]:
    """Per-row argmax as 1-based labels; ties go to the smaller label."""
    return [int(j) + 1 for j in np.argmax(pm.rows, axis=1)]


def probmap_to_dict(pm: ProbMap) -> Dict[str, object]:
    return {"view": pm.view_index, "labels_c": pm.c, "rows": pm.rows.tolist()}


def save_probmap(pm: ProbMap, path: PathLike) -> None:
    """Write ``{"view": k, "labels_c": c, "rows": [[...], ...]}``."""
    with open(path, "w") as f:
        json.dump(probmap_to_dict(pm), f, indent=2)
