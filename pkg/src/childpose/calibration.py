"""Height -> focal length calibration.

Per-person focal lengths are measured from frames where the person stands
at a known depth, then a line ``f = slope * height + intercept`` is fitted
with RANSAC. Each measurement is weighted by the inverse variance of the
depth uncertainty induced by perspective projection (sigma grows with
depth squared, so w = Z**-4). Candidate lines are ranked by the weighted
mean squared residual, with residuals truncated at the inlier threshold so
that outliers cost a fixed penalty.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .body import Role
from .errors import InvalidInputError, NoModelError, UnderdeterminedError
from .geometry import focal_from_known_depth

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FocalSample:
    person_id: str
    known_depth: float
    measured_f: float
    frame_window: tuple[int, int]

    def __post_init__(self):
        if not self.known_depth > 0:
            raise InvalidInputError("known depth must be > 0")
        if not self.measured_f > 0:
            raise InvalidInputError("measured focal length must be > 0")
        start, end = self.frame_window
        if end < start:
            raise InvalidInputError(f"empty frame window {self.frame_window}")


@dataclass(frozen=True)
class HeightFocalPoint:
    height: float
    f: float
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.height) and self.height > 0):
            raise InvalidInputError(f"height must be > 0, got {self.height}")
        if not (math.isfinite(self.f) and self.f > 0):
            raise InvalidInputError(f"focal length must be > 0, got {self.f}")
        # zero weights are representable (they simply drop out of R^2)
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise InvalidInputError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class LinearModel:
    slope: float
    intercept: float
    r2: float = float("nan")
    inliers: tuple[int, ...] = ()

    def __post_init__(self):
        if not (math.isnan(self.r2) or self.r2 <= 1.0 + 1e-12):
            raise InvalidInputError(f"R^2 cannot exceed 1, got {self.r2}")
        object.__setattr__(self, "inliers", tuple(int(i) for i in self.inliers))

    def predict(self, height):
        return self.slope * np.asarray(height, dtype=np.float64) + self.intercept


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 20.0
    max_iterations: int = 1000
    seed: int = 0
    min_points: int = 2
    # inputs up to this size are searched over every point pair
    exhaustive_max_points: int = 12

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise InvalidInputError("inlier threshold must be > 0")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if self.min_points < 2:
            raise InvalidInputError("a line needs min_points >= 2")


@dataclass(frozen=True)
class PersonProfile:
    id: str
    role: Role
    height: float
    personalized_f: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if not (math.isfinite(self.height) and self.height > 0):
            raise InvalidInputError(f"height of {self.id!r} must be > 0")
        if self.personalized_f is not None and not self.personalized_f > 0:
            raise InvalidInputError(f"personalized focal of {self.id!r} must be > 0")


def focal_sample_from_window(frames: Sequence, known_depth: float, mu: float = 2.0,
                             person_id: str = "", frame_window: Optional[tuple[int, int]] = None) -> FocalSample:
    """Median per-frame focal length over detections of one person at a known depth.

    ``frames`` are detections exposing ``bbox`` and ``wp``; frames with a
    missing box or scale are skipped.
    """
    if len(frames) == 0:
        raise InvalidInputError("empty frame window")
    if not known_depth > 0:
        raise InvalidInputError("known depth must be > 0")
    values = []
    for det in frames:
        bbox, wp = getattr(det, "bbox", None), getattr(det, "wp", None)
        if bbox is None or wp is None or not wp.s > 0:
            continue
        values.append(focal_from_known_depth(known_depth, wp.s, bbox.size, mu))
    if not values:
        raise InvalidInputError("no frame in the window has a usable scale and box")
    if len(values) < len(frames):
        log.warning("skipped %d unusable frame(s) in window for %r", len(frames) - len(values), person_id)
    if frame_window is None:
        frame_window = (0, len(frames) - 1)
    return FocalSample(person_id, float(known_depth), float(np.median(values)), tuple(frame_window))


def weight_from_depth(Z):
    """Inverse-variance weight for a measurement at depth Z (sigma = Z**2)."""
    Z = np.asarray(Z, dtype=np.float64)
    if not np.all(np.isfinite(Z)) or np.any(Z <= 0):
        raise InvalidInputError("depth must be > 0")
    w = 1.0 / Z ** 4
    return float(w) if w.ndim == 0 else w


def height_focal_point(sample: FocalSample, height: float) -> HeightFocalPoint:
    return HeightFocalPoint(height, sample.measured_f, weight_from_depth(sample.known_depth))


def _arrays(points):
    pts = list(points)
    h = np.array([p.height for p in pts], dtype=np.float64)
    f = np.array([p.f for p in pts], dtype=np.float64)
    w = np.array([p.weight for p in pts], dtype=np.float64)
    return h, f, w


def weighted_loss(points: Sequence[HeightFocalPoint], model: LinearModel) -> float:
    h, f, w = _arrays(points)
    if h.size == 0:
        raise InvalidInputError("weighted loss of an empty point set")
    if np.any(w <= 0):
        raise InvalidInputError("weighted loss requires strictly positive weights")
    r = f - model.predict(h)
    return float(np.sum(w * r * r) / np.sum(w))


def weighted_r2(points: Sequence[HeightFocalPoint], model: LinearModel) -> float:
    h, f, w = _arrays(points)
    if h.size < 2:
        raise InvalidInputError("R^2 needs at least two points")
    wsum = w.sum()
    if not wsum > 0:
        raise InvalidInputError("R^2 undefined: total weight is zero")
    fbar = np.sum(w * f) / wsum
    sst = np.sum(w * (f - fbar) ** 2)
    if not sst > 0:
        raise InvalidInputError("R^2 undefined: zero weighted variance of f")
    sse = np.sum(w * (f - model.predict(h)) ** 2)
    return float(1.0 - sse / sst)


def _wls(h, f, w):
    wsum = w.sum()
    hbar = np.sum(w * h) / wsum
    fbar = np.sum(w * f) / wsum
    sxx = np.sum(w * (h - hbar) ** 2)
    if not sxx > 0:
        raise UnderdeterminedError("line fit needs at least two distinct heights")
    slope = np.sum(w * (h - hbar) * (f - fbar)) / sxx
    return float(slope), float(fbar - slope * hbar)


def weighted_least_squares(points: Sequence[HeightFocalPoint]) -> LinearModel:
    """Closed-form weighted line fit over all points."""
    pts = list(points)
    h, f, w = _arrays(pts)
    slope, intercept = _wls(h, f, w)
    model = LinearModel(slope, intercept)
    return LinearModel(slope, intercept, _r2_or_nan(pts, model), tuple(range(len(pts))))


def _r2_or_nan(points, model):
    try:
        return weighted_r2(points, model)
    except InvalidInputError:
        return float("nan")


def _unrank_pairs(ranks, n):
    # rank r enumerates pairs (i, j), i < j, in lexicographic order
    ranks = np.asarray(ranks, dtype=np.int64)
    ii = np.empty_like(ranks)
    jj = np.empty_like(ranks)
    starts = np.array([i * n - i * (i + 1) // 2 for i in range(n)], dtype=np.int64)
    ii[:] = np.searchsorted(starts, ranks, side="right") - 1
    jj[:] = ranks - starts[ii] + ii + 1
    return ii, jj


def candidate_pairs(n: int, cfg: RansacConfig) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs defining candidate lines.

    Small inputs get every pair in lexicographic order. Larger inputs draw
    ``max_iterations`` distinct pairs from a PCG64 stream seeded with
    ``cfg.seed``; when that covers all pairs, all pairs are used.
    """
    total = n * (n - 1) // 2
    if n <= cfg.exhaustive_max_points:
        ii, jj = zip(*combinations(range(n), 2)) if total else ((), ())
        return np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    if cfg.max_iterations >= total:
        ranks = rng.permutation(total)
    else:
        ranks = rng.choice(total, size=cfg.max_iterations, replace=False)
    return _unrank_pairs(ranks, n)


def ransac_fit(points: Sequence[HeightFocalPoint], cfg: RansacConfig = RansacConfig()) -> LinearModel:
    """Robust weighted line fit of focal length against height.

    Ties in the score are broken by the larger inlier count, then by the
    lexicographically smallest inlier index set, so the result does not
    depend on candidate order.
    """
    pts = list(points)
    h, f, w = _arrays(pts)
    if np.unique(h).size < 2:
        raise UnderdeterminedError("RANSAC needs at least two distinct heights")
    if np.any(w <= 0):
        raise InvalidInputError("RANSAC requires strictly positive weights")

    ii, jj = candidate_pairs(len(pts), cfg)
    usable = h[ii] != h[jj]
    ii, jj = ii[usable], jj[usable]
    if ii.size == 0:
        raise NoModelError("no candidate pair with distinct heights was sampled")

    loss, count = _kernels.score_lines(h, f, w, ii, jj, cfg.inlier_threshold)
    ok = count >= cfg.min_points
    if not np.any(ok):
        raise NoModelError(f"no consensus set reached {cfg.min_points} points")

    best_loss = loss[ok].min()
    tied = np.flatnonzero(ok & (loss == best_loss))
    tied = tied[count[tied] == count[tied].max()]
    best_set = None
    for p in tied:
        slope = (f[jj[p]] - f[ii[p]]) / (h[jj[p]] - h[ii[p]])
        icpt = f[ii[p]] - slope * h[ii[p]]
        inl = tuple(np.flatnonzero(np.abs(f - (slope * h + icpt)) <= cfg.inlier_threshold).tolist())
        if best_set is None or inl < best_set:
            best_set = inl

    idx = np.array(best_set, dtype=np.int64)
    slope, intercept = _wls(h[idx], f[idx], w[idx])
    model = LinearModel(slope, intercept)
    r2 = _r2_or_nan([pts[i] for i in best_set], model)
    return LinearModel(slope, intercept, r2, best_set)


def predict_focal(model: LinearModel, height):
    h = np.asarray(height, dtype=np.float64)
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        raise InvalidInputError("height must be > 0")
    f = model.predict(h)
    return float(f) if f.ndim == 0 else f


def personalize(profiles: Sequence[PersonProfile], model: LinearModel) -> list[PersonProfile]:
    return [PersonProfile(p.id, p.role, p.height, predict_focal(model, p.height)) for p in profiles]


def model_to_json(model: LinearModel, cfg: Optional[RansacConfig] = None) -> str:
    doc = {
        "slope": model.slope,
        "intercept": model.intercept,
        "r2": None if math.isnan(model.r2) else model.r2,
        "inliers": list(model.inliers),
    }
    if cfg is not None:
        doc["config"] = {"inlier_threshold": cfg.inlier_threshold, "seed": cfg.seed,
                         "max_iterations": cfg.max_iterations, "min_points": cfg.min_points}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> LinearModel:
    doc = json.loads(text)
    r2 = doc.get("r2")
    return LinearModel(float(doc["slope"]), float(doc["intercept"]),
                       float("nan") if r2 is None else float(r2), tuple(doc.get("inliers", ())))


def save_model(model: LinearModel, path, cfg: Optional[RansacConfig] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(model, cfg))


def load_model(path) -> LinearModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
