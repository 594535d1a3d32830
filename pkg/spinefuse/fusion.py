"""Multi-view fusion: cross-view correspondence, line triangulation and label voting."""

# Import built-in modules
from collections import Counter
from dataclasses import dataclass
from dataclasses import field
import json
import logging
import os
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np
from scipy import linalg

# Import local modules
from spinefuse.detect import Detection2D
from spinefuse.errors import AnchorInfeasibleError
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.errors import DegenerateGeometryError
from spinefuse.geometry import Line3
from spinefuse.geometry import ProjectionGeometry
from spinefuse.geometry import backproject_pixel
from spinefuse.ident import ProbMap
from spinefuse.ident import single_view_labels
from spinefuse.ident import sort_by_v
from spinefuse.labels import DEFAULT_CATEGORIES
from spinefuse.labels import VertebraLabel
from spinefuse.parallel import parallel_map
from spinefuse.sequence import DpParams
from spinefuse.sequence import DpResult
from spinefuse.sequence import correct_labels
from spinefuse.sequence import dp_table


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

CONDITION_LIMIT = 1e8
VOTING_MODES = ("weighted", "mean", "majority")


@dataclass
class CorrespondenceSet:
    """Detections grouped per vertebra across views.

    Attributes:
        groups: One list of ``(view_index, Detection2D)`` per reference row.
        reference_view: View whose detections define the rows.
        status: Per view: ``"rank"``, ``"aligned"`` or ``"empty"``.
        assignment: Per view, the row of each v-sorted detection, -1 if dropped.
        detections: Per view, the v-sorted detections the assignment indexes.
    """

    groups: List[List[Tuple[int, Detection2D]]]
    reference_view: int
    status: Dict[int, str] = field(default_factory=dict)
    assignment: Dict[int, List[int]] = field(default_factory=dict)
    detections: Dict[int, List[Detection2D]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.groups)

    def support(self, row: int) -> int:
        return len(self.groups[row])

    @property
    def under_supported(self) -> List[int]:
        """Rows seen in fewer than two views."""
        return [row for row in range(self.n) if self.support(row) < 2]


@dataclass(frozen=True)
class LabeledCentroid3:
    """A fused vertebra: world center, label, supporting view count and triangulation residual."""

    center: Tuple[float, float, float]
    label: VertebraLabel
    support: int
    residual: float
    row: int = -1


def modal_count(counts: Sequence[int]) -> int:
    """Most frequent count; ties go to the larger count, all-distinct to the lower median."""
    tally = Counter(counts)
    if len(counts) > 1 and len(tally) == len(counts):
        return sorted(counts)[(len(counts) - 1) // 2]
    top = max(tally.values())
    return max(count for count, freq in tally.items() if freq == top)


def align_sequences(reference: Sequence[float], values: Sequence[float], gap: float) -> List[int]:
    """Monotone alignment of ``values`` onto ``reference`` minimizing Σ|Δ| + gap · #gaps.

    Returns:
        List[int]: For each value, the matched reference index or -1.
    """
    n, m = len(reference), len(values)
    cost = np.zeros((n + 1, m + 1))
    cost[1:, 0] = gap * np.arange(1, n + 1)
    cost[0, 1:] = gap * np.arange(1, m + 1)
    move = np.zeros((n + 1, m + 1), dtype=np.int8)  # 0 match, 1 skip reference, 2 skip value
    move[1:, 0] = 1
    move[0, 1:] = 2
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            options = (
                cost[i - 1, j - 1] + abs(reference[i - 1] - values[j - 1]),
                cost[i - 1, j] + gap,
                cost[i, j - 1] + gap,
            )
            best = int(np.argmin(options))
            cost[i, j] = options[best]
            move[i, j] = best

    matched = [-1] * m
    i, j = n, m
    while i > 0 or j > 0:
        step = move[i, j]
        if step == 0:
            matched[j - 1] = i - 1
            i, j = i - 1, j - 1
        elif step == 1:
            i -= 1
        else:
            j -= 1
    return matched


def match_views(dets_per_view: Sequence[Sequence[Detection2D]], gate_mm: Optional[float] = None,
                ascending: bool = True) -> CorrespondenceSet:
    """Group detections of K views into per-vertebra correspondences.

    The reference row count is the modal per-view detection count and the
    reference view the first view with that count. Views with the modal
    count are matched by v-rank; others, and modal views whose rank pairs
    drift by more than ``gate_mm`` in v, are aligned to the reference
    v-coordinates by :func:`align_sequences`. Unmatched detections drop.

    Args:
        dets_per_view: Detections of each view, indexed by view.
        gate_mm: Gap penalty and rank-drift limit; defaults to half the
            reference view's median v-spacing.
        ascending: Sort order along v.

    Raises:
        ConfigError: If fewer than two views are given.
        DataError: If every view is empty.
    """
    if len(dets_per_view) < 2:
        raise ConfigError(f"multi-view matching needs K >= 2 views, got {len(dets_per_view)}")
    sorted_views = {k: sort_by_v(dets, ascending) for k, dets in enumerate(dets_per_view)}
    counts = {k: len(dets) for k, dets in sorted_views.items() if dets}
    if not counts:
        raise DataError("every view is empty; nothing to match")

    n_ref = modal_count(list(counts.values()))
    reference = min(k for k, count in counts.items() if count == n_ref)
    ref_v = np.array([d.uv[1] for d in sorted_views[reference]])
    if gate_mm is None:
        gate_mm = 0.5 * float(np.median(np.abs(np.diff(ref_v)))) if n_ref > 1 else float("inf")
    gap = gate_mm if np.isfinite(gate_mm) else 1.0 + 2.0 * float(np.ptp(ref_v)) + sum(
        abs(d.uv[1]) for dets in sorted_views.values() for d in dets
    )

    corr = CorrespondenceSet(groups=[[] for _ in range(n_ref)], reference_view=reference)
    for k, dets in sorted_views.items():
        corr.detections[k] = dets
        if not dets:
            corr.status[k] = "empty"
            corr.assignment[k] = []
            continue
        v = np.array([d.uv[1] for d in dets])
        if len(dets) == n_ref and np.all(np.abs(v - ref_v) <= gate_mm):
            rows = list(range(n_ref))
            corr.status[k] = "rank"
        else:
            rows = align_sequences(ref_v, v, gap)
            corr.status[k] = "aligned"
            dropped = sum(1 for r in rows if r < 0)
            if dropped:
                logger.debug("View %d: %d of %d detections dropped in alignment", k, dropped, len(dets))
        corr.assignment[k] = rows
        for det, row in zip(dets, rows):
            if row >= 0:
                corr.groups[row].append((k, det))
    return corr


def triangulate(lines: Sequence[Line3], condition_limit: float = CONDITION_LIMIT,
                views: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, float]:
    """Least-squares intersection of 3D lines.

    Solves ``S p = q`` with ``S = Σ(I - n nᵀ)`` and ``q = Σ(I - n nᵀ) a``.

    Args:
        lines: At least two lines.
        condition_limit: Largest accepted condition number of ``S``.
        views: View index of each line, used in error messages.

    Returns:
        Tuple[np.ndarray, float]: The point and ``Σ_k (a_k - p)ᵀ(I - n_k n_kᵀ)(a_k - p)``.

    Raises:
        ConfigError: With fewer than two lines.
        DegenerateGeometryError: If ``S`` is ill-conditioned.
    """
    if len(lines) < 2:
        raise ConfigError(f"triangulation needs at least two lines, got {len(lines)}")
    a = np.array([line.a for line in lines], dtype=np.float64)
    n = np.array([line.n for line in lines], dtype=np.float64)
    projectors = np.eye(3)[None, :, :] - n[:, :, None] * n[:, None, :]
    s = projectors.sum(axis=0)
    q = np.einsum("kij,kj->i", projectors, a)

    condition = float(np.linalg.cond(s))
    if not np.isfinite(condition) or condition > condition_limit:
        views = list(views) if views is not None else list(range(len(lines)))
        raise DegenerateGeometryError(
            f"lines from views {views} are near-parallel (cond(S)={condition:.3g})",
            views=views, condition=condition,
        )

    p = linalg.solve(s, q, assume_a="pos")
    offsets = a - p
    perpendicular = offsets - np.sum(offsets * n, axis=1)[:, None] * n
    residual = float(np.sum(perpendicular * perpendicular))
    return p, residual


def voting_weights(losses: Sequence[float]) -> np.ndarray:
    """``W_k = (1 - L_k) / Σ_a (1 - L_a)``.

    Raises:
        DataError: If ``Σ(1 - L) <= 0``.
    """
    gains = 1.0 - np.asarray(losses, dtype=np.float64)
    total = gains.sum()
    if total <= 0:
        raise DataError(f"voting weights undefined: sum(1 - L_s) = {total}")
    return gains / total


def vote_probmaps(pms: Sequence[Union[ProbMap, np.ndarray]], losses: Sequence[float],
                  support: Optional[np.ndarray] = None) -> ProbMap:
    """Sequence-loss weighted vote ``V = Σ W_k P_k``.

    Args:
        pms: Per-view maps aligned to the same ``(n, c)`` rows.
        losses: Per-view sequence losses.
        support: Optional ``(K, n)`` mask of which views observed each row;
            each row's weights are then renormalized over its views.

    Raises:
        DataError: On mismatched shapes, ``Σ(1 - L) <= 0`` or an
            unsupported row.
    """
    if len(pms) == 0 or len(pms) != len(losses):
        raise DataError(f"need one loss per map, got {len(pms)} maps and {len(losses)} losses")
    matrices = [pm.rows if isinstance(pm, ProbMap) else np.asarray(pm, dtype=np.float64) for pm in pms]
    shapes = {m.shape for m in matrices}
    if len(shapes) != 1:
        raise DataError(f"probability maps disagree in shape: {sorted(shapes)}")
    stack = np.stack(matrices)

    weights = voting_weights(losses)
    if support is None:
        voted = np.einsum("k,kij->ij", weights, stack)
    else:
        mask = np.asarray(support, dtype=np.float64)
        if mask.shape != stack.shape[:2]:
            raise DataError(f"support mask {mask.shape} does not match (K, n) = {stack.shape[:2]}")
        row_weights = weights[:, None] * mask
        totals = row_weights.sum(axis=0)
        if np.any(totals <= 0):
            raise DataError(f"rows {np.flatnonzero(totals <= 0).tolist()} have no supporting view")
        voted = np.einsum("ki,kij->ij", row_weights / totals, stack)
    # Convex combination of normalized rows; renormalize away rounding only
    voted = voted / voted.sum(axis=1, keepdims=True)
    return ProbMap(rows=np.clip(voted, 0.0, 1.0))


def majority_labels(labels_per_view: Sequence[Sequence[int]], support: np.ndarray) -> List[int]:
    """Per-row most frequent label among supporting views; ties go to the smaller label."""
    labels = np.asarray(labels_per_view)
    result = []
    for row in range(labels.shape[1]):
        votes = Counter(labels[support[:, row], row].tolist())
        top = max(votes.values())
        result.append(min(label for label, count in votes.items() if count == top))
    return result


@dataclass
class FusionResult:
    """Everything fuse_all produced, diagnostics included."""

    centroids: List[LabeledCentroid3]
    correspondence: CorrespondenceSet
    labels: List[int]
    row_argmax: List[int]
    voted: ProbMap
    voted_dp: DpResult
    weights: Dict[int, float]
    losses: Dict[int, float]
    view_dp: Dict[int, DpResult]
    unlocalized: List[int] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)


def _aligned_rows(pm: ProbMap, assignment: List[int], n: int) -> Tuple[np.ndarray, np.ndarray]:
    rows = np.full((n, pm.c), 1.0 / pm.c)
    seen = np.zeros(n, dtype=bool)
    for pm_row, det_pos in enumerate(pm.det_index):
        row = assignment[det_pos] if det_pos < len(assignment) else -1
        if row >= 0:
            rows[row] = pm.rows[pm_row]
            seen[row] = True
    return rows, seen


def fuse_all(dets_per_view: Sequence[Sequence[Detection2D]], probmaps: Sequence[Optional[ProbMap]],
             geometries: Sequence[ProjectionGeometry], params: Optional[DpParams] = None,
             voting: str = "weighted", gate_mm: Optional[float] = None, ascending: bool = True,
             condition_limit: float = CONDITION_LIMIT, c: int = DEFAULT_CATEGORIES,
             threads: int = 1) -> FusionResult:
    """Fuse per-view detections and probability maps into labeled 3D centroids.

    ``probmaps[k]`` must have been aggregated over ``sort_by_v(dets_per_view[k],
    ascending)`` so that its ``det_index`` refers to v-sorted positions;
    ``None`` marks a view without a map.

    Raises:
        ConfigError: If K < 2, the inputs disagree in length, or ``voting``
            is unknown.
        DataError: If no view produced a probability map.
    """
    params = params or DpParams()
    if voting not in VOTING_MODES:
        raise ConfigError(f"unknown voting mode {voting!r}, expected one of {VOTING_MODES}")
    if not len(dets_per_view) == len(probmaps) == len(geometries):
        raise ConfigError("detections, probability maps and geometries must cover the same views")
    if len(geometries) < 2:
        raise ConfigError(f"fusion needs K >= 2 views, got {len(geometries)}")

    corr = match_views(dets_per_view, gate_mm=gate_mm, ascending=ascending)
    n = corr.n
    errors: List[str] = []

    def locate(row: int) -> Tuple[Optional[Tuple[np.ndarray, float]], Optional[str]]:
        members = corr.groups[row]
        if len(members) < 2:
            return None, None
        lines = [backproject_pixel(geometries[k], det.uv) for k, det in members]
        try:
            return triangulate(lines, condition_limit, views=[k for k, _ in members]), None
        except DegenerateGeometryError as e:
            logger.warning("Row %d not localized: %s", row, e)
            return None, f"row {row}: {e}"

    # Errors are collected in row order, independent of worker scheduling
    outcomes = parallel_map(locate, range(n), threads)
    located = [hit for hit, _ in outcomes]
    errors.extend(message for _, message in outcomes if message is not None)

    # Per-view maps aligned to correspondence rows
    views, aligned, seen, losses, view_dp = [], [], [], {}, {}
    for k, pm in enumerate(probmaps):
        if pm is None:
            continue
        rows, mask = _aligned_rows(pm, corr.assignment.get(k, []), n)
        if not mask.any():
            continue
        view_dp[k] = dp_table(pm, params)
        losses[k] = view_dp[k].seq_loss
        views.append(k)
        aligned.append(rows)
        seen.append(mask)
    if not views:
        raise DataError("no view contributed a probability map")
    support = np.array(seen)
    # Rows no map covers vote uniform across all views
    support[:, ~support.any(axis=0)] = True

    # mean and majority vote with equal weights
    vote_losses = [losses[k] for k in views] if voting == "weighted" else [0.0] * len(views)
    voted = vote_probmaps(aligned, vote_losses, support=support)
    weights = dict(zip(views, voting_weights(vote_losses).tolist()))
    voted_dp = dp_table(voted, params)
    row_argmax = single_view_labels(voted)

    if voting == "majority":
        per_view = [[int(np.argmax(rows[r])) + 1 for r in range(n)] for rows in aligned]
        labels = majority_labels(per_view, support)
    else:
        try:
            labels = correct_labels(voted, params)
        except AnchorInfeasibleError as e:
            errors.append(str(e))
            logger.warning("Label correction infeasible, using per-row argmax: %s", e)
            labels = row_argmax

    centroids, unlocalized = [], []
    for row, hit in enumerate(located):
        if hit is None:
            unlocalized.append(row)
            continue
        point, residual = hit
        centroids.append(LabeledCentroid3(
            center=tuple(float(x) for x in point), label=VertebraLabel(labels[row], c),
            support=corr.support(row), residual=residual, row=row,
        ))
    if unlocalized:
        logger.warning("%d of %d vertebrae unlocalized (rows %s)", len(unlocalized), n, unlocalized)

    return FusionResult(
        centroids=centroids, correspondence=corr, labels=labels, row_argmax=row_argmax, voted=voted,
        voted_dp=voted_dp, weights=weights, losses=losses, view_dp=view_dp, unlocalized=unlocalized,
        errors=errors,
    )


def centroids_to_list(centroids: Sequence[LabeledCentroid3]) -> List[Dict[str, object]]:
    return [
        {"label": c.label.name, "center_mm": list(c.center), "support": c.support, "residual": c.residual}
        for c in centroids
    ]


def save_centroids(centroids: Sequence[LabeledCentroid3], path: PathLike) -> None:
    """Write ``[{"label": "L1", "center_mm": [x, y, z], "support": k, "residual": r}, ...]``."""
    with open(path, "w") as f:
        json.dump(centroids_to_list(centroids), f, indent=2)
