"""Evaluation metrics, K-ablation sweeps and their reports."""

# Import built-in modules
import csv
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
import logging
import math
import os
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.errors import SpineFuseError
from spinefuse.fusion import LabeledCentroid3
from spinefuse.labels import Annotation3
from spinefuse.parallel import parallel_map


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

DEFAULT_MATCH_RADIUS_MM = 20.0
CSV_COLUMNS = ("K", "seed", "id_rate", "l_error_mm", "matched", "missed", "spurious")
EXTRA_COLUMNS = ("voting", "sigma_px")


@dataclass
class VertebraOutcome:
    label_gt: str
    label_pred: Optional[str]
    error_mm: Optional[float]


@dataclass
class EvalResult:
    """Identification rate and localization error of one prediction.

    ``id_rate`` counts correctly labeled matches over all ground-truth
    vertebrae; ``l_error_mm`` averages over matched pairs only and is NaN
    when nothing matched.
    """

    id_rate: float
    l_error_mm: float
    total: int
    matched: int
    missed: int
    spurious: int
    correct: int
    per_vertebra: List[VertebraOutcome] = field(default_factory=list)


def match_predictions(pred: np.ndarray, gt: np.ndarray, radius: float) -> List[Tuple[int, int, float]]:
    """Greedy one-to-one matching by increasing distance within ``radius``.

    Returns:
        List[Tuple[int, int, float]]: ``(gt_index, pred_index, distance)`` pairs.
    """
    if len(pred) == 0 or len(gt) == 0:
        return []
    distances = np.linalg.norm(gt[:, None, :] - pred[None, :, :], axis=2)
    gi, pi = np.nonzero(distances <= radius)
    # Ties on distance break by gt index, then prediction index
    order = np.lexsort((pi, gi, distances[gi, pi]))
    used_gt, used_pred, pairs = set(), set(), []
    for g, p in zip(gi[order], pi[order]):
        if g in used_gt or p in used_pred:
            continue
        used_gt.add(g)
        used_pred.add(p)
        pairs.append((int(g), int(p), float(distances[g, p])))
    return pairs


def evaluate(pred: Sequence[LabeledCentroid3], gt: Annotation3,
             match_radius_mm: float = DEFAULT_MATCH_RADIUS_MM) -> EvalResult:
    """Score fused centroids against a ground-truth annotation.

    Raises:
        ConfigError: If ``match_radius_mm`` is not positive.
        DataError: If ``gt`` is empty.
    """
    if match_radius_mm <= 0:
        raise ConfigError(f"match radius must be > 0 mm, got {match_radius_mm}")
    if len(gt) == 0:
        raise DataError("cannot evaluate against an empty annotation")

    gt_centers = gt.centers
    pred_centers = np.array([c.center for c in pred], dtype=np.float64).reshape(-1, 3)
    pairs = match_predictions(pred_centers, gt_centers, match_radius_mm)
    by_gt = {g: (p, d) for g, p, d in pairs}

    outcomes, correct = [], 0
    for g, label in enumerate(gt.labels):
        if g not in by_gt:
            outcomes.append(VertebraOutcome(label_gt=label.name, label_pred=None, error_mm=None))
            continue
        p, distance = by_gt[g]
        predicted = pred[p].label
        correct += int(predicted.index == label.index)
        outcomes.append(VertebraOutcome(label_gt=label.name, label_pred=predicted.name, error_mm=distance))

    total, matched = len(gt), len(pairs)
    l_error = float(np.mean([d for _, _, d in pairs])) if pairs else math.nan
    return EvalResult(
        id_rate=correct / total, l_error_mm=l_error, total=total, matched=matched, missed=total - matched,
        spurious=len(pred) - matched, correct=correct, per_vertebra=outcomes,
    )


def eval_to_dict(result: EvalResult) -> Dict[str, Any]:
    payload = asdict(result)
    if math.isnan(result.l_error_mm):
        payload["l_error_mm"] = None
    return payload


@dataclass
class SweepRow:
    """One ``(K, seed)`` run of a sweep; ``error`` is set when the run failed."""

    k: int
    seed: int
    id_rate: float = math.nan
    l_error_mm: float = math.nan
    matched: int = 0
    missed: int = 0
    spurious: int = 0
    voting: str = "weighted"
    sigma_px: float = 0.0
    error: Optional[str] = None


def sweep_k(cfg: Any, k_values: Sequence[int], seeds: Sequence[int],
            voting_modes: Optional[Sequence[str]] = None, noise_sigmas: Optional[Sequence[float]] = None,
            threads: int = 1) -> List[SweepRow]:
    """Run the simulated pipeline for every ``(K, seed)`` combination.

    Args:
        cfg: Base :class:`spinefuse.config.RunConfig`.
        k_values: View counts, each at least 2.
        seeds: Seeds; each run derives its phantom and oracle streams from one.
        voting_modes: Extra voting modes to sweep; the configured mode otherwise.
        noise_sigmas: Extra detector noise levels in pixels; the configured one otherwise.
        threads: Runs executed concurrently.

    Returns:
        List[SweepRow]: Rows ordered by voting mode, noise, K, then seed.

    Raises:
        ConfigError: If a K is below 2.
    """
    # Import local modules
    from spinefuse.pipeline import simulate_case

    bad = [k for k in k_values if k < 2]
    if bad:
        raise ConfigError(f"sweep K values must be >= 2, got {bad}")
    modes = list(voting_modes) if voting_modes else [cfg.fusion.voting]
    sigmas = list(noise_sigmas) if noise_sigmas else [cfg.detector_oracle.noise_sigma_px]
    jobs = [(mode, sigma, k, seed) for mode in modes for sigma in sigmas for k in k_values for seed in seeds]

    def run(job: Tuple[str, float, int, int]) -> SweepRow:
        mode, sigma, k, seed = job
        row = SweepRow(k=k, seed=seed, voting=mode, sigma_px=sigma)
        try:
            case = simulate_case(cfg.with_overrides(voting=mode, noise_sigma_px=sigma, threads=1), seed, k=k)
        except SpineFuseError as e:
            logger.warning("Sweep run K=%d seed=%d failed: %s", k, seed, e)
            row.error = str(e)
            return row
        result = case.evaluation
        row.id_rate, row.l_error_mm = result.id_rate, result.l_error_mm
        row.matched, row.missed, row.spurious = result.matched, result.missed, result.spurious
        return row

    rows = parallel_map(run, jobs, threads)
    logger.info("Sweep finished: %d runs, %d failed", len(rows), sum(1 for r in rows if r.error))
    return rows


def _sample_std(values: List[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def summarize(rows: Sequence[SweepRow]) -> List[Dict[str, Any]]:
    """Mean and sample standard deviation per ``(voting, sigma_px, K)``, failed runs excluded."""
    groups: Dict[Tuple[str, float, int], List[SweepRow]] = {}
    for row in rows:
        groups.setdefault((row.voting, row.sigma_px, row.k), []).append(row)

    summary = []
    for (voting, sigma, k), members in groups.items():
        ok = [r for r in members if r.error is None]
        id_rates = [r.id_rate for r in ok]
        errors = [r.l_error_mm for r in ok if not math.isnan(r.l_error_mm)]
        summary.append({
            "K": k,
            "voting": voting,
            "sigma_px": sigma,
            "runs": len(members),
            "failed": len(members) - len(ok),
            "id_rate_mean": float(np.mean(id_rates)) if id_rates else math.nan,
            "id_rate_std": _sample_std(id_rates),
            "l_error_mean": float(np.mean(errors)) if errors else math.nan,
            "l_error_std": _sample_std(errors),
        })
    return summary


def write_csv(rows: Sequence[SweepRow], path: PathLike, extended: bool = False) -> None:
    """Write ``K,seed,id_rate,l_error_mm,matched,missed,spurious`` rows.

    With ``extended``, ``voting`` and ``sigma_px`` follow the base columns.
    """
    columns = CSV_COLUMNS + EXTRA_COLUMNS if extended else CSV_COLUMNS
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            values = [row.k, row.seed, row.id_rate, row.l_error_mm, row.matched, row.missed, row.spurious]
            if extended:
                values += [row.voting, row.sigma_px]
            writer.writerow(values)
    logger.debug("Wrote %d sweep rows to: %s", len(rows), path)


def write_summary_csv(summary: Sequence[Dict[str, Any]], path: PathLike) -> None:
    if not summary:
        raise DataError("nothing to summarize")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(summary[0]))
        writer.writeheader()
        writer.writerows(summary)
