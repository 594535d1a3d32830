"""End-to-end simulated case: phantom, views, oracles, fusion and evaluation."""

# Import built-in modules
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
import logging
import time
from typing import List
from typing import Optional
from typing import Tuple

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.config import RunConfig
from spinefuse.detect import Detection2D
from spinefuse.detect import detect_view
from spinefuse.drr import DrrImage
from spinefuse.drr import render_drr
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.fusion import FusionResult
from spinefuse.fusion import fuse_all
from spinefuse.geometry import ProjectionGeometry
from spinefuse.geometry import project_point
from spinefuse.ident import AggregationReport
from spinefuse.ident import ProbMap
from spinefuse.ident import aggregate_probmap
from spinefuse.ident import oracle_field
from spinefuse.ident import rasterize_labels
from spinefuse.ident import sort_by_v
from spinefuse.labels import Annotation3
from spinefuse.metrics import EvalResult
from spinefuse.metrics import evaluate
from spinefuse.parallel import parallel_map
from spinefuse.phantom import make_phantom
from spinefuse.volume import Volume3
from spinefuse.volume import resample_isotropic


logger = logging.getLogger(__name__)


@dataclass
class ViewResult:
    """Single-view products of one case."""

    geometry: ProjectionGeometry
    gt_uv: np.ndarray
    detections: List[Detection2D]
    probmap: Optional[ProbMap]
    report: AggregationReport = field(default_factory=AggregationReport)
    drr: Optional[DrrImage] = None


@dataclass
class CaseResult:
    volume: Optional[Volume3]
    annotation: Annotation3
    views: List[ViewResult]
    fusion: FusionResult
    evaluation: EvalResult

    @property
    def geometries(self) -> List[ProjectionGeometry]:
        return [view.geometry for view in self.views]


def _prepare(cfg: RunConfig, seed: int, volume: Optional[Volume3],
             annotation: Optional[Annotation3]) -> Tuple[Optional[Volume3], Annotation3]:
    if annotation is None:
        if volume is not None:
            raise ConfigError("a volume needs its annotation; pass both or neither")
        return make_phantom(replace(cfg.phantom, seed=seed))
    if volume is not None and cfg.resample_mm is not None:
        volume = resample_isotropic(volume, cfg.resample_mm)
    return volume, annotation


def simulate_case(cfg: RunConfig, seed: int, k: Optional[int] = None, render: bool = False,
                  volume: Optional[Volume3] = None, annotation: Optional[Annotation3] = None) -> CaseResult:
    """Run the whole pipeline once.

    Without a ``volume`` and an ``annotation`` a phantom is generated from
    ``cfg.phantom`` with ``seed``; a volume alone is rejected. Both oracles draw from ``seed``. Rendering is only
    needed for image output; the oracles work from projected ground truth.

    Args:
        cfg: Run configuration.
        seed: Case seed.
        k: View count, ``cfg.k`` by default.
        render: Also render a DRR per view.
        volume: Input volume, resampled to ``cfg.resample_mm``.
        annotation: Ground truth for ``volume``.

    Raises:
        ConfigError: On invalid parameters, or a volume without annotation.
        DataError: If no view yields usable detections.
        NumericError: On singular projections or degenerate geometry.
    """
    k = cfg.k if k is None else k
    threads = cfg.resolved_threads()
    start = time.perf_counter()
    volume, annotation = _prepare(cfg, seed, volume, annotation)
    if render and volume is None:
        raise DataError("rendering needs a volume")

    geometries = cfg.geometry.views(k)
    centers = annotation.centers
    label_indices = [label.index for label in annotation.labels]
    ascending = cfg.ident.labels_increase_with_v
    detector_spec = replace(cfg.detector_oracle, seed=seed)
    classifier_spec = replace(cfg.classifier_oracle, seed=seed)

    def run_view(geometry: ProjectionGeometry) -> ViewResult:
        gt_uv = project_point(geometry, centers).reshape(-1, 2)
        detections = sort_by_v(
            detect_view(gt_uv, geometry, detector_spec, sigma_px=cfg.detect.sigma_px, rho_min=cfg.detect.rho_min,
                        delta_min_px=cfg.detect.delta_min_px),
            ascending,
        )
        label_image = rasterize_labels(gt_uv, label_indices, geometry, cfg.ident.label_half_width_mm)
        prob_field = oracle_field(label_image, classifier_spec, geometry.view_index)
        report = AggregationReport()
        probmap = None
        if detections:
            try:
                probmap = aggregate_probmap(prob_field, detections, geometry, cfg.ident.square_mm, report)
            except DataError as e:
                logger.warning("View %d has no probability map: %s", geometry.view_index, e)
        drr = render_drr(volume, geometry, cfg.render.step_mm) if render else None
        return ViewResult(geometry=geometry, gt_uv=gt_uv, detections=detections, probmap=probmap,
                          report=report, drr=drr)

    views = parallel_map(run_view, geometries, threads)
    fusion = fuse_all(
        [view.detections for view in views], [view.probmap for view in views], geometries,
        params=cfg.dp, voting=cfg.fusion.voting, gate_mm=cfg.fusion.match_gate_mm, ascending=ascending,
        condition_limit=cfg.fusion.condition_limit, c=cfg.phantom.c, threads=threads,
    )
    evaluation = evaluate(fusion.centroids, annotation, cfg.eval.match_radius_mm)
    logger.info("Case seed=%d K=%d: id_rate=%.4f l_error=%.3f mm (%.2fs)",
                seed, k, evaluation.id_rate, evaluation.l_error_mm, time.perf_counter() - start)
    return CaseResult(volume=volume, annotation=annotation, views=views, fusion=fusion, evaluation=evaluation)
