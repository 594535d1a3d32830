"""Run configuration: defaults, JSON files and command-line overrides."""

# Import built-in modules
import copy
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import is_dataclass
from dataclasses import replace
import json
import logging
import os
from typing import Any
from typing import Dict
from typing import Optional
from typing import Tuple
from typing import Union

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.detect import DetectorOracleSpec
from spinefuse.errors import ConfigError
from spinefuse.errors import SpineFuseError
from spinefuse.fusion import VOTING_MODES
from spinefuse.geometry import make_views
from spinefuse.ident import ClassifierOracleSpec
from spinefuse.parallel import resolve_threads
from spinefuse.phantom import PhantomSpec
from spinefuse.sequence import DpParams


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]


@dataclass
class GeometryConfig:
    """Source and detector setup shared by all views."""

    # Source to isocenter distance (mm)
    sad: float = 1000.0
    # Source to detector distance (mm)
    sdd: float = 1500.0
    # Detector size in pixels (nu, nv)
    detector_shape: Tuple[int, int] = (512, 512)
    # Pixel pitch (mm)
    pitch: Tuple[float, float] = (1.0, 1.0)
    isocenter: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def views(self, k: int):
        return make_views(k, self.sad, self.sdd, self.detector_shape, self.pitch, self.isocenter)


@dataclass
class RenderConfig:
    # Ray sampling step (mm)
    step_mm: float = 0.5


@dataclass
class DetectConfig:
    """Heatmap synthesis and density-peak thresholds."""

    sigma_px: float = 4.0
    rho_min: float = 0.3
    delta_min_px: float = 10.0


@dataclass
class IdentConfig:
    # Side of the averaging square around each detection (mm)
    square_mm: float = 22.0
    # Half width of the ground-truth label bands (mm)
    label_half_width_mm: float = 20.0
    # Label index grows with v on the detector
    labels_increase_with_v: bool = True


@dataclass
class FusionConfig:
    voting: str = "weighted"
    # Correspondence gap penalty; None derives it from the reference view
    match_gate_mm: Optional[float] = None
    condition_limit: float = 1e8


@dataclass
class EvalConfig:
    match_radius_mm: float = 20.0


@dataclass
class RunConfig:
    """Everything a ``phantom``, ``render``, ``run`` or ``sweep`` invocation needs."""

    # Number of views
    k: int = 10
    seed: int = 0
    # Worker threads; None falls back to SPINEFUSE_THREADS, then 1
    threads: Optional[int] = None
    out_dir: str = "out"
    # Isotropic resampling of loaded volumes (mm); None keeps the input grid
    resample_mm: Optional[float] = 1.0
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    detector_oracle: DetectorOracleSpec = field(default_factory=DetectorOracleSpec)
    classifier_oracle: ClassifierOracleSpec = field(default_factory=ClassifierOracleSpec)
    ident: IdentConfig = field(default_factory=IdentConfig)
    dp: DpParams = field(default_factory=DpParams)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def resolved_threads(self) -> int:
        return resolve_threads(self.threads)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with flag-style overrides applied; ``None`` values are ignored.

        Recognized keys: ``k``, ``seed``, ``threads``, ``out_dir``,
        ``sigma_px``, ``noise_sigma_px``, ``p_miss``, ``p_spurious``,
        ``voting``, ``n`` and ``start_label``.

        Raises:
            ConfigError: On an unknown key or an invalid value.
        """
        cfg = copy.deepcopy(self)
        routes = {
            "sigma_px": ("detect", "sigma_px"),
            "noise_sigma_px": ("detector_oracle", "noise_sigma_px"),
            "p_miss": ("detector_oracle", "p_miss"),
            "p_spurious": ("detector_oracle", "p_spurious"),
            "voting": ("fusion", "voting"),
            "n": ("phantom", "n"),
            "start_label": ("phantom", "start_label"),
        }
        for key, value in overrides.items():
            if value is None:
                continue
            if key in ("k", "seed", "threads", "out_dir"):
                setattr(cfg, key, value)
            elif key in routes:
                section, name = routes[key]
                try:
                    setattr(cfg, section, replace(getattr(cfg, section), **{name: value}))
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"invalid value for {key}: {value!r} ({e})")
            else:
                raise ConfigError(f"unknown override {key!r}")
        return cfg

    def validate(self, require_fusion: bool = True) -> None:
        """Check every module precondition before any work starts.

        Args:
            require_fusion: Also require ``k >= 2``, which fusion needs.

        Raises:
            ConfigError: On the first violated precondition.
        """
        minimum_k = 2 if require_fusion else 1
        if self.k < minimum_k:
            raise ConfigError(f"K must be >= {minimum_k}, got {self.k}")
        self.resolved_threads()
        self.geometry.views(self.k)
        checks = [
            (self.render.step_mm > 0, f"render.step_mm must be > 0, got {self.render.step_mm}"),
            (self.detect.sigma_px > 0, f"detect.sigma_px must be > 0, got {self.detect.sigma_px}"),
            (self.detect.rho_min >= 0, f"detect.rho_min must be >= 0, got {self.detect.rho_min}"),
            (self.detect.delta_min_px >= 0, f"detect.delta_min_px must be >= 0, got {self.detect.delta_min_px}"),
            (self.ident.square_mm > 0, f"ident.square_mm must be > 0, got {self.ident.square_mm}"),
            (self.ident.label_half_width_mm > 0,
             f"ident.label_half_width_mm must be > 0, got {self.ident.label_half_width_mm}"),
            (self.fusion.voting in VOTING_MODES,
             f"fusion.voting must be one of {VOTING_MODES}, got {self.fusion.voting!r}"),
            (self.fusion.match_gate_mm is None or self.fusion.match_gate_mm > 0,
             f"fusion.match_gate_mm must be > 0, got {self.fusion.match_gate_mm}"),
            (self.fusion.condition_limit > 1, f"fusion.condition_limit must be > 1, got {self.fusion.condition_limit}"),
            (self.eval.match_radius_mm > 0, f"eval.match_radius_mm must be > 0, got {self.eval.match_radius_mm}"),
            (self.resample_mm is None or self.resample_mm > 0, f"resample_mm must be > 0, got {self.resample_mm}"),
            (self.classifier_oracle.c == self.phantom.c,
             f"classifier has {self.classifier_oracle.c} categories but the phantom uses {self.phantom.c}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        confusion = payload["classifier_oracle"]["confusion"]
        if isinstance(confusion, np.ndarray):
            payload["classifier_oracle"]["confusion"] = confusion.tolist()
        return payload


def _build(cls: type, payload: Dict[str, Any], where: str) -> Any:
    if not isinstance(payload, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(payload).__name__}")
    defaults = cls()
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(payload) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")

    values = {}
    for name, value in payload.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            values[name] = _build(type(current), value, f"{where}.{name}")
        elif isinstance(value, list) and name != "confusion":
            values[name] = tuple(value)
        else:
            values[name] = value
    try:
        return cls(**values)
    except SpineFuseError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {where}: {e}")


def config_from_dict(payload: Dict[str, Any]) -> RunConfig:
    return _build(RunConfig, payload, "config")


def load_config(path: Optional[PathLike] = None) -> RunConfig:
    """Load a JSON config file over the defaults.

    Args:
        path: Config file; ``None`` returns the defaults.

    Raises:
        ConfigError: If the file is missing, not JSON, or holds unknown keys.
    """
    if path is None:
        return RunConfig()
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"failed to parse config {path}: {e}")
    cfg = config_from_dict(payload)
    logger.debug("Loaded config from: %s", path)
    return cfg

