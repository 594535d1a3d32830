"""Command-line interface: ``spinefuse phantom|render|run|sweep``."""

# Import built-in modules
import argparse
from dataclasses import replace
import json
import logging
import os
from pathlib import Path
import sys
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

# Import local modules
from spinefuse.__version__ import __version__
from spinefuse.config import RunConfig
from spinefuse.config import load_config
from spinefuse.drr import render_drr
from spinefuse.drr import save_drr
from spinefuse.errors import ConfigError
from spinefuse.errors import SpineFuseError
from spinefuse.fusion import VOTING_MODES
from spinefuse.fusion import save_centroids
from spinefuse.geometry import project_point
from spinefuse.ident import probmap_to_dict
from spinefuse.labels import Annotation3
from spinefuse.labels import load_annotation
from spinefuse.labels import save_annotation
from spinefuse.metrics import eval_to_dict
from spinefuse.metrics import summarize
from spinefuse.metrics import sweep_k
from spinefuse.metrics import write_csv
from spinefuse.metrics import write_summary_csv
from spinefuse.phantom import PhantomSpec
from spinefuse.phantom import make_phantom
from spinefuse.pipeline import simulate_case
from spinefuse.sequence import dp_result_to_dict
from spinefuse.volume import Volume3
from spinefuse.volume import load_volume
from spinefuse.volume import resample_isotropic
from spinefuse.volume import save_volume


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _seed_list(text: str) -> List[int]:
    """``0,1,2`` or a half-open range ``0:20``."""
    if ":" in text:
        start, _, stop = text.partition(":")
        try:
            return list(range(int(start), int(stop)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a seed range like 0:20, got {text!r}")
    return _int_list(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads (default: $SPINEFUSE_THREADS or 1)")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    common.add_argument("--k", type=int, help="number of views")
    common.add_argument("--sigma-px", dest="sigma_px", type=float, help="heatmap Gaussian width")
    common.add_argument("--p-miss", dest="p_miss", type=float)
    common.add_argument("--p-spurious", dest="p_spurious", type=float)
    common.add_argument("--voting", choices=VOTING_MODES)

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("--volume", help="volume header (.json); a phantom is generated otherwise")
    inputs.add_argument("--annotation", help="centroid annotation JSON for --volume")

    parser = argparse.ArgumentParser(prog="spinefuse", description="Multi-view vertebra localization and identification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    phantom = sub.add_parser("phantom", parents=[common], help="write a synthetic spine volume and annotation")
    phantom.add_argument("--n", type=int, help="vertebra count")
    phantom.add_argument("--start-label", dest="start_label", type=int)

    render = sub.add_parser("render", parents=[common, inputs], help="render K DRRs and project the annotation")
    render.add_argument("--display", action="store_true", help="also write 8-bit preview images")

    run = sub.add_parser("run", parents=[common, inputs], help="localize, identify, fuse and evaluate")
    run.add_argument("--dump-dp", dest="dump_dp", action="store_true", help="write per-view DP tables")
    run.add_argument("--dump-probmaps", dest="dump_probmaps", action="store_true", help="write per-view probability maps")
    run.add_argument("--no-render", dest="render", action="store_false", help="skip DRR rendering (oracles only)")

    sweep = sub.add_parser("sweep", parents=[common], help="ablation over K and seeds")
    sweep.add_argument("--k-list", dest="k_list", type=_int_list, default=[5, 10, 20])
    sweep.add_argument("--seeds", type=_seed_list, default=list(range(5)))
    sweep.add_argument("--noise-list", dest="noise_list", type=_float_list, help="detector noise levels (px)")
    sweep.add_argument("--voting-list", dest="voting_list", type=lambda s: s.split(","), help="voting modes")
    return parser


def setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then ``--config``, then flags."""
    cfg = load_config(args.config)
    return cfg.with_overrides(
        k=args.k, seed=args.seed, threads=args.threads, out_dir=args.out_dir, sigma_px=args.sigma_px,
        p_miss=args.p_miss, p_spurious=args.p_spurious, voting=args.voting,
        n=getattr(args, "n", None), start_label=getattr(args, "start_label", None),
    )


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(payload: object, path: Path) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def _load_inputs(args: argparse.Namespace, c: int) -> Tuple[Optional[Volume3], Optional[Annotation3]]:
    """Volume and annotation named by --volume/--annotation, or ``(None, None)``."""
    if args.volume is None:
        return None, None
    for flag, value in (("--volume", args.volume), ("--annotation", args.annotation)):
        if value is None:
            raise ConfigError(f"{flag} is required when --volume is given")
        if not os.path.exists(value):
            raise ConfigError(f"{flag} file not found: {value}")
    return load_volume(args.volume), load_annotation(args.annotation, c)


def _seeded_phantom(cfg: RunConfig) -> PhantomSpec:
    return replace(cfg.phantom, seed=cfg.seed)


def cmd_phantom(cfg: RunConfig, args: argparse.Namespace) -> int:
    volume, annotation = make_phantom(_seeded_phantom(cfg))
    out = _out_dir(cfg)
    header = save_volume(volume, out / "phantom.json")
    save_annotation(annotation, out / "annotation.json")
    logger.info("Wrote phantom %s with %d vertebrae to: %s", volume.dims, len(annotation), header)
    return 0


def cmd_render(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.validate(require_fusion=False)
    volume, annotation = _load_inputs(args, cfg.phantom.c)
    if volume is None:
        volume, annotation = make_phantom(_seeded_phantom(cfg))
    elif cfg.resample_mm is not None:
        volume = resample_isotropic(volume, cfg.resample_mm)
    threads = cfg.resolved_threads()
    geometries = cfg.geometry.views(cfg.k)
    out = _out_dir(cfg)

    projected = []
    for geometry in geometries:
        image = render_drr(volume, geometry, cfg.render.step_mm, threads=threads)
        save_drr(image, out / f"view_{geometry.view_index:02d}.pgm", display=args.display)
        uv = project_point(geometry, annotation.centers).reshape(-1, 2)
        projected.append({
            "view": geometry.view_index,
            "points": [{"label": label.name, "uv_mm": [float(u), float(v)]}
                       for label, (u, v) in zip(annotation.labels, uv)],
        })
    _write_json(projected, out / "projected_annotation.json")
    logger.info("Rendered %d views to: %s", len(geometries), out)
    return 0


def cmd_run(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.validate()
    volume, annotation = _load_inputs(args, cfg.phantom.c)
    case = simulate_case(cfg, cfg.seed, render=args.render, volume=volume, annotation=annotation)
    out = _out_dir(cfg)
    for view in case.views:
        if view.drr is not None:
            save_drr(view.drr, out / "drr" / f"view_{view.geometry.view_index:02d}.pgm")
    save_centroids(case.fusion.centroids, out / "centroids.json")
    _write_json(eval_to_dict(case.evaluation), out / "eval.json")
    if args.dump_dp:
        payload = {str(k): dp_result_to_dict(result) for k, result in case.fusion.view_dp.items()}
        payload["voted"] = dp_result_to_dict(case.fusion.voted_dp)
        _write_json(payload, out / "dp.json")
    if args.dump_probmaps:
        _write_json([probmap_to_dict(view.probmap) for view in case.views if view.probmap is not None],
                    out / "probmaps.json")
    for message in case.fusion.errors:
        logger.warning("%s", message)
    print(f"id_rate={case.evaluation.id_rate:.4f} l_error_mm={case.evaluation.l_error_mm:.3f} "
          f"matched={case.evaluation.matched}/{case.evaluation.total}")
    return 0


def cmd_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    cfg.validate()
    unknown = [mode for mode in args.voting_list or [] if mode not in VOTING_MODES]
    if unknown:
        raise ConfigError(f"unknown voting mode(s) {unknown}, expected {VOTING_MODES}")
    rows = sweep_k(cfg, args.k_list, args.seeds, voting_modes=args.voting_list, noise_sigmas=args.noise_list,
                   threads=cfg.resolved_threads())
    out = _out_dir(cfg)
    extended = bool(args.voting_list or args.noise_list)
    write_csv(rows, out / "sweep.csv", extended=extended)
    summary = summarize(rows)
    write_summary_csv(summary, out / "summary.csv")
    for entry in summary:
        print(f"K={entry['K']} voting={entry['voting']} sigma={entry['sigma_px']}: "
              f"id_rate={entry['id_rate_mean']:.4f}±{entry['id_rate_std']:.4f} "
              f"l_error={entry['l_error_mean']:.3f}±{entry['l_error_std']:.3f} mm")
    return 0


COMMANDS = {"phantom": cmd_phantom, "render": cmd_render, "run": cmd_run, "sweep": cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except SpineFuseError as e:
        logger.error("%s", e)
        print(f"spinefuse: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
