"""Circular-orbit projection geometry: forward projection and back-projection."""

# Import built-in modules
from dataclasses import dataclass
from functools import cached_property
import logging
from typing import Any
from typing import Dict
from typing import List
from typing import Sequence
from typing import Tuple

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.errors import ProjectionSingularError


logger = logging.getLogger(__name__)

SINGULAR_EPS = 1e-9


def rotation_z(theta_deg: float) -> np.ndarray:
    theta = np.deg2rad(theta_deg)
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Line3:
    """A 3D line through ``a`` with unit direction ``n``."""

    a: Tuple[float, float, float]
    n: Tuple[float, float, float]

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise DataError(f"line direction must be unit length, |n|={np.linalg.norm(n)!r}")

    @classmethod
    def through(cls, a: Sequence[float], b: Sequence[float]) -> "Line3":
        """Line from ``a`` towards ``b``."""
        a = np.asarray(a, dtype=np.float64)
        d = np.asarray(b, dtype=np.float64) - a
        norm = np.linalg.norm(d)
        if norm == 0:
            raise DataError("cannot build a line through two identical points")
        return cls(tuple(a), tuple(d / norm))

    def distance_to(self, p: Sequence[float]) -> float:
        """Perpendicular distance from ``p`` to the line."""
        w = np.asarray(p, dtype=np.float64) - np.asarray(self.a)
        n = np.asarray(self.n)
        return float(np.linalg.norm(w - np.dot(w, n) * n))


@dataclass(frozen=True)
class ProjectionGeometry:
    """Source/detector pose of view ``view_index`` out of ``k_total``.

    The source orbits the world z axis through ``isocenter`` at
    ``theta_deg = view_index * 360 / k_total``. Detector coordinates
    ``(u, v)`` are millimetres about the detector center along
    ``u_axis`` and ``v_axis``; ``v_axis`` is always +z.
    """

    view_index: int = 0
    k_total: int = 1
    sad: float = 1000.0
    sdd: float = 1500.0
    detector_shape: Tuple[int, int] = (512, 512)
    pitch: Tuple[float, float] = (1.0, 1.0)
    isocenter: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.k_total < 1:
            raise ConfigError(f"view count K must be >= 1, got {self.k_total}")
        if not 0 <= self.view_index < self.k_total:
            raise ConfigError(f"view index {self.view_index} outside [0, {self.k_total})")
        if not 0 < self.sad < self.sdd:
            raise ConfigError(f"geometry needs 0 < sad < sdd, got sad={self.sad}, sdd={self.sdd}")
        if min(self.detector_shape) < 1 or min(self.pitch) <= 0:
            raise ConfigError(f"detector {self.detector_shape} @ {self.pitch} mm must be positive")

    @property
    def theta_deg(self) -> float:
        return self.view_index * 360.0 / self.k_total

    @cached_property
    def rotation(self) -> np.ndarray:
        return rotation_z(self.theta_deg)

    @cached_property
    def source(self) -> np.ndarray:
        return np.asarray(self.isocenter) + self.rotation @ np.array([self.sad, 0.0, 0.0])

    @cached_property
    def detector_center(self) -> np.ndarray:
        return np.asarray(self.isocenter) + self.rotation @ np.array([self.sad - self.sdd, 0.0, 0.0])

    @cached_property
    def u_axis(self) -> np.ndarray:
        return self.rotation @ np.array([0.0, 1.0, 0.0])

    @property
    def v_axis(self) -> np.ndarray:
        return np.array([0.0, 0.0, 1.0])

    @property
    def magnification(self) -> float:
        return self.sdd / self.sad

    @property
    def half_extent_mm(self) -> Tuple[float, float]:
        """Distance from the detector center to the outer pixel edges."""
        nu, nv = self.detector_shape
        return nu * self.pitch[0] / 2.0, nv * self.pitch[1] / 2.0

    def pixel_to_uv(self, pixels: np.ndarray) -> np.ndarray:
        """Continuous pixel ``(col, row)`` to detector ``(u, v)`` mm."""
        nu, nv = self.detector_shape
        px = np.asarray(pixels, dtype=np.float64)
        offset = np.array([(nu - 1) / 2.0, (nv - 1) / 2.0])
        return (px - offset) * np.asarray(self.pitch)

    def uv_to_pixel(self, uv: np.ndarray) -> np.ndarray:
        nu, nv = self.detector_shape
        offset = np.array([(nu - 1) / 2.0, (nv - 1) / 2.0])
        return np.asarray(uv, dtype=np.float64) / np.asarray(self.pitch) + offset

    def uv_to_world(self, uv: np.ndarray) -> np.ndarray:
        """World position of detector coordinates ``(u, v)``."""
        uv = np.asarray(uv, dtype=np.float64)
        return self.detector_center + uv[..., :1] * self.u_axis + uv[..., 1:2] * self.v_axis

    def pixel_center_world(self, pixels: np.ndarray) -> np.ndarray:
        return self.uv_to_world(self.pixel_to_uv(pixels))

    def contains_uv(self, uv: Sequence[float]) -> bool:
        hu, hv = self.half_extent_mm
        return abs(uv[0]) <= hu and abs(uv[1]) <= hv

    def to_dict(self) -> Dict[str, Any]:
        return {
            "view_index": self.view_index,
            "k_total": self.k_total,
            "theta_deg": self.theta_deg,
            "sad": self.sad,
            "sdd": self.sdd,
            "detector_shape": list(self.detector_shape),
            "pitch": list(self.pitch),
            "isocenter": list(self.isocenter),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ProjectionGeometry":
        try:
            return cls(
                view_index=int(payload["view_index"]),
                k_total=int(payload["k_total"]),
                sad=float(payload["sad"]),
                sdd=float(payload["sdd"]),
                detector_shape=tuple(int(x) for x in payload["detector_shape"]),
                pitch=tuple(float(x) for x in payload["pitch"]),
                isocenter=tuple(float(x) for x in payload["isocenter"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed geometry {payload!r}: {e}")


def make_views(
    k: int,
    sad: float = 1000.0,
    sdd: float = 1500.0,
    detector_shape: Tuple[int, int] = (512, 512),
    pitch: Tuple[float, float] = (1.0, 1.0),
    isocenter: Sequence[float] = (0.0, 0.0, 0.0),
) -> List[ProjectionGeometry]:
    """Build ``k`` views evenly spaced by ``360 / k`` degrees.

    Raises:
        ConfigError: If ``k < 1``.
    """
    if k < 1:
        raise ConfigError(f"view count K must be >= 1, got {k}")
    iso = tuple(float(x) for x in isocenter)
    return [
        ProjectionGeometry(view_index=i, k_total=k, sad=sad, sdd=sdd,
                           detector_shape=tuple(detector_shape), pitch=tuple(pitch), isocenter=iso)
        for i in range(k)
    ]


def project_point(geometry: ProjectionGeometry, points: np.ndarray) -> np.ndarray:
    """Project world points onto the detector.

    Args:
        geometry: View to project into.
        points: ``(3,)`` or ``(N, 3)`` world points in mm.

    Returns:
        np.ndarray: ``(2,)`` or ``(N, 2)`` detector ``(u, v)`` in mm.

    Raises:
        ProjectionSingularError: If a point is at or behind the source plane.
    """
    pts = np.asarray(points, dtype=np.float64)
    local = (np.atleast_2d(pts) - np.asarray(geometry.isocenter)) @ geometry.rotation
    depth = geometry.sad - local[:, 0]
    if np.any(depth <= SINGULAR_EPS):
        bad = np.atleast_2d(pts)[depth <= SINGULAR_EPS][0]
        raise ProjectionSingularError(
            f"point {bad.tolist()} is at or behind the source plane of view {geometry.view_index}"
        )
    uv = geometry.sdd * local[:, 1:3] / depth[:, None]
    return uv[0] if pts.ndim == 1 else uv


def backproject_pixel(geometry: ProjectionGeometry, uv: Sequence[float]) -> Line3:
    """Line from the view's source through detector point ``uv``."""
    target = geometry.uv_to_world(np.asarray(uv, dtype=np.float64))
    direction = target - geometry.source
    return Line3(tuple(geometry.source), tuple(direction / np.linalg.norm(direction)))
