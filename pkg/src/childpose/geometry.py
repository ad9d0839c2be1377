"""Pinhole / weak-perspective camera geometry.

The detector reports, per person, a bounding box and a weak-perspective
triple (s, x, y). Depth follows from the box size and the focal length as
``d = mu * f / (s * alpha)``; the metric translation of the body is then

    t = [d (x alpha + c_x - w/2) / f,  d (y alpha + c_y - h/2) / f,  d]

with the principal point fixed at the image center. Units: meters for
world coordinates (camera frame, +z away from the camera), pixels for
image quantities and for f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .body import Skeleton
from .errors import BehindCameraError, InvalidInputError, UnderdeterminedError


def _require_positive(name, value):
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidInputError(f"{name} must be positive and finite")
    return arr


def _scalar_or_array(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    w: int
    h: int
    mu: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.f) and self.f > 0):
            raise InvalidInputError(f"focal length must be > 0, got {self.f}")
        if int(self.w) != self.w or int(self.h) != self.h or self.w < 1 or self.h < 1:
            raise InvalidInputError(f"image size must be positive integers, got {self.w}x{self.h}")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise InvalidInputError(f"mu must be > 0, got {self.mu}")
        object.__setattr__(self, "f", float(self.f))
        object.__setattr__(self, "w", int(self.w))
        object.__setattr__(self, "h", int(self.h))
        object.__setattr__(self, "mu", float(self.mu))

    def with_focal(self, f: float) -> "CameraIntrinsics":
        return CameraIntrinsics(f, self.w, self.h, self.mu)


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("bounding box corners must be finite")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise InvalidInputError(f"degenerate bounding box {vals}")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def size(self) -> float:
        return max(self.x_max - self.x_min, self.y_max - self.y_min)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.x_max + dx, self.y_min + dy, self.y_max + dy)


@dataclass(frozen=True)
class WeakPerspectiveCam:
    s: float
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s > 0):
            raise InvalidInputError(f"weak-perspective scale must be > 0, got {self.s}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError("weak-perspective offsets must be finite")


@dataclass(frozen=True)
class TranslationVector:
    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)) or t[2] <= 0:
            raise InvalidInputError(f"translation depth must be > 0, got {t}")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def d(self) -> float:
        return float(self.t[2])


@dataclass(frozen=True)
class TiltModel:
    """Vertical offset of the estimate relative to the reference, linear in depth."""

    slope_m: float
    offset_b: float

    def __post_init__(self):
        if not (math.isfinite(self.slope_m) and math.isfinite(self.offset_b)):
            raise InvalidInputError("tilt model coefficients must be finite")

    def offset_at(self, z):
        return self.slope_m * np.asarray(z) + self.offset_b


def bbox_geometry(bbox: BoundingBox) -> tuple[float, float, float]:
    """Center (c_x, c_y) and size alpha = max side of a box."""
    if not (bbox.x_max > bbox.x_min and bbox.y_max > bbox.y_min):
        raise InvalidInputError("degenerate bounding box")
    c_x, c_y = bbox.center
    return c_x, c_y, bbox.size


def depth_from_scale(cam: CameraIntrinsics, s, alpha):
    """Person depth in meters; ``s`` and ``alpha`` may be arrays."""
    s = _require_positive("s", s)
    alpha = _require_positive("alpha", alpha)
    return _scalar_or_array(cam.mu * cam.f / (s * alpha))


def focal_from_known_depth(d, s, alpha, mu=2.0):
    """Focal length that places a person with scale ``s`` and box size ``alpha`` at depth ``d``."""
    d = _require_positive("depth", d)
    s = _require_positive("s", s)
    alpha = _require_positive("alpha", alpha)
    mu = _require_positive("mu", mu)
    return _scalar_or_array(d * s * alpha / mu)


def translation_vector(cam: CameraIntrinsics, bbox: BoundingBox, wp: WeakPerspectiveCam) -> TranslationVector:
    c_x, c_y, alpha = bbox_geometry(bbox)
    d = depth_from_scale(cam, wp.s, alpha)
    tx = d * (wp.x * alpha + c_x - cam.w / 2.0) / cam.f
    ty = d * (wp.y * alpha + c_y - cam.h / 2.0) / cam.f
    return TranslationVector(np.array([tx, ty, d]))


def project_points(cam: CameraIntrinsics, points) -> np.ndarray:
    """Project (N, 3) camera-frame points to (N, 2) pixel coordinates."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if np.any(p[:, 2] <= 0):
        raise BehindCameraError("point at or behind the camera plane")
    uv = np.empty((p.shape[0], 2))
    uv[:, 0] = cam.f * p[:, 0] / p[:, 2] + cam.w / 2.0
    uv[:, 1] = cam.f * p[:, 1] / p[:, 2] + cam.h / 2.0
    return uv


def project_point(cam: CameraIntrinsics, p) -> tuple[float, float]:
    u, v = project_points(cam, p)[0]
    return float(u), float(v)


def fit_tilt(samples: Iterable[tuple[float, float]]) -> TiltModel:
    """Least-squares line ``y_error = m * z + b`` through (z, y_error) samples."""
    arr = np.asarray(list(samples), dtype=np.float64).reshape(-1, 2)
    if np.unique(arr[:, 0]).size < 2:
        raise UnderdeterminedError("tilt fit needs at least two distinct depths")
    A = np.column_stack([arr[:, 0], np.ones(arr.shape[0])])
    (m, b), *_ = np.linalg.lstsq(A, arr[:, 1], rcond=None)
    return TiltModel(float(m), float(b))


def apply_tilt(skeleton: Skeleton, model: TiltModel) -> Skeleton:
    pts = skeleton.positions().copy()
    if pts.size:
        pts[:, 1] -= model.slope_m * pts[:, 2] + model.offset_b
    return skeleton.with_positions(pts)


def tilt_samples(pairs) -> list[tuple[float, float]]:
    """(z, y_est - y_ref) for every joint shared by each (reference, estimate) skeleton pair."""
    out = []
    for ref, est in pairs:
        if ref is None or est is None:
            continue
        for name in ref.names:
            if name in est:
                out.append((float(est[name][2]), float(est[name][1] - ref[name][1])))
    return out
