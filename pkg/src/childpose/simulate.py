"""Synthetic two-person sessions with exact ground truth.

Bodies are vertical segments of the person's height carrying a fixed
proportion upper-body joint set (arms open at shoulder height). A physical
pinhole camera of focal ``camera_f`` renders boxes and silhouettes; the
detector record of each person is built so that, with the person's true
focal length ``slope * height + intercept``, the depth and translation
equations return the true hip position exactly. Noise and outliers are
applied afterwards.

Random stream: one ``numpy.random.Generator(PCG64(seed))``. For every frame
and every person in config order it draws, in this order, 4 standard
normals (box corners x_min, x_max, y_min, y_max), 1 standard normal (scale),
1 uniform (outlier test) and 1 uniform (outlier scale). Draws happen even
when the corresponding noise is zero, so streams line up across configs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .body import COMMON_JOINTS, Convention, Role, Skeleton
from .calibration import HeightFocalPoint, PersonProfile
from .errors import InvalidInputError
from .geometry import BoundingBox, CameraIntrinsics, WeakPerspectiveCam, translation_vector
from .metrics import SilhouetteMask, default_bones, rasterize_projected, write_pbm
from .records import Detection, FrameRecord, SessionDataset

# joint -> (lateral offset, height above floor), both as fractions of body height
BODY_PROPORTIONS = {
    "head": (0.0, 0.93),
    "neck": (0.0, 0.84),
    "spine": (0.0, 0.70),
    "hip": (0.0, 0.53),
    "left_shoulder": (0.11, 0.81),
    "right_shoulder": (-0.11, 0.81),
    "left_elbow": (0.26, 0.81),
    "right_elbow": (-0.26, 0.81),
    "left_wrist": (0.40, 0.81),
    "right_wrist": (-0.40, 0.81),
    "left_hip": (0.06, 0.52),
    "right_hip": (-0.06, 0.52),
}
ROOT_JOINT = "hip"
BOX_HALF_WIDTH = 0.42
NECK_RADIUS_FRACTION = 0.035

DEFAULT_WAYPOINTS = (1.3, 1.9, 2.2, 2.5, 3.0)


@dataclass(frozen=True)
class SimConfig:
    slope: float = 164.47
    intercept: float = 135.23
    persons: tuple[tuple[float, str], ...] = ((1.75, "therapist"), (0.9, "child"))
    waypoints: tuple[float, ...] = DEFAULT_WAYPOINTS
    width: int = 512
    height: int = 424
    camera_f: float = 365.0
    # focal used for the uncorrected reconstruction; None -> tallest person's true focal
    base_focal: Optional[float] = None
    mu: float = 2.0
    camera_height: float = 1.0
    lateral_spacing: float = 0.8
    frames_per_waypoint: int = 10
    noise_s: float = 0.0
    noise_bbox: float = 0.0
    outlier_fraction: float = 0.0
    seed: int = 0
    fps: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "persons", tuple((float(h), str(r)) for h, r in self.persons))
        object.__setattr__(self, "waypoints", tuple(float(z) for z in self.waypoints))
        if not self.persons:
            raise InvalidInputError("simulation needs at least one person")
        for h, r in self.persons:
            if r not in {x.value for x in Role}:
                raise InvalidInputError(f"unknown role {r!r}")
            if not h > 0:
                raise InvalidInputError(f"person height must be > 0, got {h}")
            if not self.true_focal(h) > 0:
                raise InvalidInputError(f"true focal for height {h} is not positive")
        if not self.waypoints or any(not z > 0 for z in self.waypoints):
            raise InvalidInputError("waypoint depths must be > 0")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise InvalidInputError("outlier fraction must be in [0, 1)")
        if self.noise_s < 0 or self.noise_bbox < 0:
            raise InvalidInputError("noise levels must be >= 0")
        if self.frames_per_waypoint < 1:
            raise InvalidInputError("frames_per_waypoint must be >= 1")
        if self.base_focal is not None and not self.base_focal > 0:
            raise InvalidInputError("base focal must be > 0")
        CameraIntrinsics(self.camera_f, self.width, self.height, self.mu)

    def true_focal(self, height: float) -> float:
        return self.slope * height + self.intercept

    @property
    def person_ids(self) -> tuple[str, ...]:
        return tuple(f"{role[0].upper()}{k}" for k, (_, role) in enumerate(self.persons))

    @property
    def profiles(self) -> tuple[PersonProfile, ...]:
        return tuple(PersonProfile(pid, role, h) for pid, (h, role) in zip(self.person_ids, self.persons))

    @property
    def render_camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.camera_f, self.width, self.height, self.mu)

    @property
    def reconstruction_camera(self) -> CameraIntrinsics:
        f = self.base_focal
        if f is None:
            f = self.true_focal(max(h for h, _ in self.persons))
        return CameraIntrinsics(f, self.width, self.height, self.mu)


@dataclass(frozen=True)
class SimFrame:
    index: int
    depth: float
    detections: tuple[Detection, ...]
    gt_skeletons: tuple[Skeleton, ...]
    gt_masks: tuple[SilhouetteMask, ...]
    neck_radii: tuple[float, ...]


def body_joints(height: float, root: np.ndarray) -> Skeleton:
    """Common-convention joints of a standing body whose hip sits at ``root``."""
    hip_frac = BODY_PROPORTIONS[ROOT_JOINT][1]
    joints = {}
    for name in COMMON_JOINTS:
        lat, up = BODY_PROPORTIONS[name]
        joints[name] = root + np.array([lat * height, -(up - hip_frac) * height, 0.0])
    return Skeleton(Convention.COMMON, joints)


def _exact_detection(cfg: SimConfig, height: float, true_f: float, root: np.ndarray):
    cam = cfg.render_camera
    d = root[2]
    floor = cfg.camera_height
    x0 = cam.f * (root[0] - BOX_HALF_WIDTH * height) / d + cam.w / 2.0
    x1 = cam.f * (root[0] + BOX_HALF_WIDTH * height) / d + cam.w / 2.0
    y0 = cam.f * (floor - height) / d + cam.h / 2.0
    y1 = cam.f * floor / d + cam.h / 2.0
    bbox = BoundingBox(x0, x1, y0, y1)
    c_x, c_y = bbox.center
    alpha = bbox.size
    s = cfg.mu * true_f / (d * alpha)
    x = (root[0] * true_f / d - (c_x - cam.w / 2.0)) / alpha
    y = (root[1] * true_f / d - (c_y - cam.h / 2.0)) / alpha
    return bbox, WeakPerspectiveCam(s, x, y)


def simulate(cfg: SimConfig) -> list[SimFrame]:
    rng = np.random.default_rng(cfg.seed)
    bones = default_bones()
    render = cfg.render_camera
    recon = cfg.reconstruction_camera
    n = len(cfg.persons)
    lateral = [(k - (n - 1) / 2.0) * cfg.lateral_spacing for k in range(n)]
    hip_frac = BODY_PROPORTIONS[ROOT_JOINT][1]
    frames = []
    index = 0
    for depth in cfg.waypoints:
        for _ in range(cfg.frames_per_waypoint):
            dets, skels, masks, radii = [], [], [], []
            for k, ((height, role), pid) in enumerate(zip(cfg.persons, cfg.person_ids)):
                root = np.array([lateral[k], cfg.camera_height - hip_frac * height, depth])
                gt = body_joints(height, root)
                bbox, wp = _exact_detection(cfg, height, cfg.true_focal(height), root)

                corner_noise = rng.standard_normal(4) * cfg.noise_bbox
                s_noise = rng.standard_normal()
                u_out, u_val = rng.random(), rng.random()
                nb = BoundingBox(bbox.x_min + corner_noise[0], bbox.x_max + corner_noise[1],
                                 bbox.y_min + corner_noise[2], bbox.y_max + corner_noise[3])
                s = wp.s * math.exp(cfg.noise_s * s_noise)
                if u_out < cfg.outlier_fraction:
                    s = wp.s * (0.2 + 4.8 * u_val)
                nwp = WeakPerspectiveCam(s, wp.x, wp.y)

                t = translation_vector(recon, nb, nwp).t
                est = gt.translated(t - root)
                radius = render.f * NECK_RADIUS_FRACTION * height / depth
                dets.append(Detection(person_id=pid, bbox=nb, wp=nwp, skeleton=est,
                                      suit_score=0.9 if role == Role.THERAPIST.value else 0.1))
                skels.append(gt)
                masks.append(rasterize_projected(gt, render, bones, radius))
                radii.append(radius)
            frames.append(SimFrame(index, depth, tuple(dets), tuple(skels), tuple(masks), tuple(radii)))
            index += 1
    return frames


def to_sessions(frames: Sequence[SimFrame], cfg: SimConfig,
                mask_paths: Optional[Sequence[Sequence[Path]]] = None) -> tuple[SessionDataset, SessionDataset]:
    """Ground-truth and estimated sessions sharing the frame-record format of real data."""
    profiles = cfg.profiles
    gt_frames, est_frames = [], []
    for k, fr in enumerate(frames):
        ts = fr.index / cfg.fps
        gt_people = []
        for j, (p, skel, radius) in enumerate(zip(profiles, fr.gt_skeletons, fr.neck_radii)):
            mask = None if mask_paths is None else mask_paths[k][j]
            gt_people.append(Detection(person_id=p.id, role=p.role, skeleton=skel, mask_path=mask,
                                       neck_radius=radius))
        gt_frames.append(FrameRecord(fr.index, tuple(gt_people), ts))
        est_frames.append(FrameRecord(fr.index, fr.detections, ts))
    gt = SessionDataset(cfg.render_camera, profiles, tuple(gt_frames))
    est = SessionDataset(cfg.reconstruction_camera, profiles, tuple(est_frames))
    return gt, est


def write_simulation(frames: Sequence[SimFrame], cfg: SimConfig, out_dir, dropout: float = 0.0,
                     dropout_seed: Optional[int] = None) -> tuple[Path, Path]:
    """Write ``gt.jsonl``, ``est.jsonl`` and ``masks/*.pbm`` under ``out_dir``."""
    from .io import save_session

    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    paths = []
    for fr in frames:
        row = []
        for pid, mask in zip(cfg.person_ids, fr.gt_masks):
            p = out / "masks" / f"{fr.index:06d}_{pid}.pbm"
            write_pbm(mask, p, raw=True)
            row.append(p)
        paths.append(row)
    gt, est = to_sessions(frames, cfg, paths)
    if dropout > 0:
        seed = cfg.seed if dropout_seed is None else dropout_seed
        est = replace(est, frames=tuple(inject_kinect_dropout(est.frames, dropout, seed)))
    save_session(gt, out / "gt.jsonl")
    save_session(est, out / "est.jsonl")
    return out / "gt.jsonl", out / "est.jsonl"


def dropout_mask(n_frames: int, fraction: float, seed: int) -> np.ndarray:
    """Frames whose skeletons are removed: one uniform draw per frame, dropped when below ``fraction``."""
    if not 0.0 <= fraction <= 1.0:
        raise InvalidInputError("dropout fraction must be in [0, 1]")
    return np.random.default_rng(seed).random(n_frames) < fraction


def inject_kinect_dropout(frames: Sequence[FrameRecord], fraction: float, seed: int) -> list[FrameRecord]:
    """Remove every skeleton from a seeded subset of frames, mimicking a depth camera losing people."""
    drop = dropout_mask(len(frames), fraction, seed)
    out = []
    for fr, gone in zip(frames, drop):
        if gone:
            fr = replace(fr, people=tuple(replace(d, skeleton=None) for d in fr.people))
        out.append(fr)
    return out


def sample_calibration_points(slope: float, intercept: float, heights: Sequence[float], depths: Sequence[float],
                              noise_scale: float = 0.0, outlier_fraction: float = 0.0,
                              outlier_offset: tuple[float, float] = (60.0, 200.0),
                              seed: int = 0) -> tuple[list[HeightFocalPoint], np.ndarray]:
    """(height, f, 1/Z**4) points on a known line with depth-dependent noise and gross outliers.

    Noise on f has standard deviation ``noise_scale * Z**2``. Exactly
    ``round(outlier_fraction * n)`` points, picked at random, are pushed
    off the line by a uniform offset in ``outlier_offset`` with random sign.
    Returns the points and a boolean outlier mask.
    """
    h = np.asarray(heights, dtype=np.float64)
    Z = np.broadcast_to(np.asarray(depths, dtype=np.float64), h.shape)
    if h.size == 0 or np.any(h <= 0) or np.any(Z <= 0):
        raise InvalidInputError("heights and depths must be positive")
    if not 0.0 <= outlier_fraction < 1.0:
        raise InvalidInputError("outlier fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    f = slope * h + intercept + rng.standard_normal(h.size) * noise_scale * Z ** 2
    n_out = int(round(outlier_fraction * h.size))
    out = np.zeros(h.size, dtype=bool)
    out[rng.permutation(h.size)[:n_out]] = True
    lo, hi = outlier_offset
    offsets = rng.uniform(lo, hi, h.size) * rng.choice([-1.0, 1.0], h.size)
    f = np.where(out, f + offsets, f)
    if np.any(f <= 0):
        raise InvalidInputError("simulated focal lengths must stay positive")
    points = [HeightFocalPoint(float(a), float(b), float(z) ** -4) for a, b, z in zip(h, f, Z)]
    return points, out
