"""Evaluation protocol: per-frame 3D RMSE, depth traces, two-person detection
rate and silhouette Dice with disk dilation and centroid compensation."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .body import COMMON_JOINTS, JOINT_NAMES, Convention, Role, Skeleton
from .errors import DimensionMismatchError, FormatError, InvalidInputError
from .geometry import CameraIntrinsics, TiltModel, apply_tilt, fit_tilt, project_points, tilt_samples
from .records import Detection, SessionDataset
from .skeleton import _config_text, assign_roles, RoleFeatures, to_common

log = logging.getLogger(__name__)

# pixel coordinates beyond this are clamped before rasterization
_COORD_LIMIT = 1 << 20


@dataclass(frozen=True)
class SilhouetteMask:
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool, row-major

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim == 1:
            if b.size != self.width * self.height:
                raise InvalidInputError(f"{b.size} bits for a {self.width}x{self.height} mask")
            b = b.reshape(self.height, self.width)
        if b.shape != (self.height, self.width):
            raise InvalidInputError(f"bits shape {b.shape} != ({self.height}, {self.width})")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def empty(cls, width: int, height: int) -> "SilhouetteMask":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, SilhouetteMask):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class BoneGraph:
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        edges = tuple((str(a), str(b)) for a, b in self.edges)
        for a, b in edges:
            if a == b:
                raise InvalidInputError(f"self-edge on {a!r}")
        object.__setattr__(self, "edges", edges)

    def validate(self, names=COMMON_JOINTS) -> None:
        known = set(names)
        bad = sorted({n for e in self.edges for n in e} - known)
        if bad:
            raise InvalidInputError(f"bones reference unknown joints {bad}")


def parse_bones(text: str, path=None) -> BoneGraph:
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise FormatError("expected 'joint_a joint_b'", path, lineno)
        edges.append((parts[0], parts[1]))
    return BoneGraph(tuple(edges))


def default_bones() -> BoneGraph:
    g = parse_bones(_config_text("common.bones"), "common.bones")
    g.validate()
    return g


@dataclass(frozen=True)
class EvalReport:
    frames: tuple[int, ...]
    rmse: np.ndarray              # meters, NaN where not computable
    dice_therapist: np.ndarray    # NaN where the system has no skeleton or no reference
    dice_child: np.ndarray
    detected_both: np.ndarray     # bool; only meaningful where gt_both
    gt_both: np.ndarray           # bool; ground truth shows both people
    detection_rate: float         # percent, NaN without any two-person gt frame

    @staticmethod
    def _mean(series):
        valid = series[~np.isnan(series)]
        return float(valid.mean()) if valid.size else float("nan")

    @property
    def mean_rmse(self) -> float:
        return self._mean(self.rmse)

    @property
    def mean_dice_therapist(self) -> float:
        return self._mean(self.dice_therapist)

    @property
    def mean_dice_child(self) -> float:
        return self._mean(self.dice_child)


# ---------------------------------------------------------------------------
# 3D metrics

def frame_rmse(gt: Skeleton, est: Skeleton) -> float:
    names = [n for n in gt.names if n in est]
    if not names:
        raise InvalidInputError("skeletons share no joint")
    diff = gt.positions(names) - est.positions(names)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def mean_rmse(per_frame: Sequence[Optional[float]]) -> float:
    """Mean over frames with a value; ``None`` and NaN entries are skipped."""
    vals = [float(v) for v in per_frame if v is not None and not math.isnan(v)]
    if not vals:
        raise InvalidInputError("no valid frame to average")
    return float(np.mean(vals))


def depth_trace(frames: Sequence[Mapping[str, Optional[Skeleton]]], person: str, joint_name: str) -> np.ndarray:
    """Depth (z) of ``joint_name`` for ``person`` in each frame; NaN marks an absent person or joint."""
    conventions = {s.convention for fr in frames for s in fr.values() if s is not None}
    known = set().union(*(JOINT_NAMES[c] for c in conventions)) if conventions else set(COMMON_JOINTS)
    if joint_name not in known:
        raise InvalidInputError(f"unknown joint {joint_name!r}")
    out = np.full(len(frames), np.nan)
    for k, fr in enumerate(frames):
        skel = fr.get(person)
        if skel is not None and joint_name in skel:
            out[k] = skel[joint_name][2]
    return out


def detection_rate(gt_frames: Mapping[int, Sequence], est_frames: Mapping[int, Sequence],
                   roles: Sequence = (Role.THERAPIST, Role.CHILD)) -> float:
    """Percent of ground-truth frames in which every role is present in the estimate.

    Both arguments map frame index -> roles present. Only ground-truth frames
    that themselves show every role are counted.
    """
    need = set(roles)
    ref = [k for k, present in gt_frames.items() if need <= set(present)]
    if not ref:
        raise InvalidInputError("no ground-truth frame shows both people")
    hits = sum(1 for k in ref if need <= set(est_frames.get(k, ())))
    return 100.0 * hits / len(ref)


# ---------------------------------------------------------------------------
# silhouettes

def _pixel(value: float) -> int:
    return int(min(max(math.floor(value + 0.5), -_COORD_LIMIT), _COORD_LIMIT))


def rasterize_skeleton(joints2d: Mapping[str, Sequence[float]], bones: BoneGraph, radius: float,
                       dims: tuple[int, int]) -> SilhouetteMask:
    """Draw every joint and bone, then dilate by a disk of ``radius`` pixels.

    ``joints2d`` maps joint name -> (u, v) pixels; ``dims`` is (width, height).
    Joints are snapped to the nearest pixel (halves round up). Geometry
    outside the canvas is clipped.
    """
    width, height = int(dims[0]), int(dims[1])
    if width < 1 or height < 1:
        raise InvalidInputError(f"canvas must be positive, got {dims}")
    if not radius >= 0:
        raise InvalidInputError("radius must be >= 0")
    pix = {}
    for name, (u, v) in joints2d.items():
        if math.isfinite(u) and math.isfinite(v):
            pix[name] = (_pixel(u), _pixel(v))
    segs = [(x, y, x, y) for x, y in pix.values()]
    segs += [pix[a] + pix[b] for a, b in bones.edges if a in pix and b in pix]
    segs = np.array(segs, dtype=np.int64).reshape(-1, 4)
    bits = _kernels.rasterize_segments(segs, _kernels.disk_offsets(radius), width, height)
    return SilhouetteMask(width, height, bits)


def rasterize_projected(skel: Skeleton, cam: CameraIntrinsics, bones: BoneGraph, radius: float,
                        dims: Optional[tuple[int, int]] = None) -> SilhouetteMask:
    """Project a 3D skeleton with ``cam`` and rasterize it; joints behind the camera are dropped."""
    names = [n for n in skel.names if skel[n][2] > 0]
    uv = project_points(cam, skel.positions(names)) if names else np.zeros((0, 2))
    dims = (cam.w, cam.h) if dims is None else dims
    return rasterize_skeleton(dict(zip(names, map(tuple, uv))), bones, radius, dims)


def centroid(mask: SilhouetteMask) -> tuple[float, float]:
    ys, xs = np.nonzero(mask.bits)
    if xs.size == 0:
        raise InvalidInputError("centroid of an empty mask")
    return float(xs.mean()), float(ys.mean())


def shift_mask(mask: SilhouetteMask, dx: int, dy: int) -> SilhouetteMask:
    out = np.zeros_like(mask.bits)
    H, W = mask.height, mask.width
    if abs(dx) < W and abs(dy) < H:
        out[max(dy, 0):H + min(dy, 0), max(dx, 0):W + min(dx, 0)] = \
            mask.bits[max(-dy, 0):H - max(dy, 0), max(-dx, 0):W - max(dx, 0)]
    return SilhouetteMask(W, H, out)


def align_centroids(est: SilhouetteMask, ref: SilhouetteMask) -> SilhouetteMask:
    """Shift ``est`` by the rounded centroid offset to ``ref`` (halves round up)."""
    ex, ey = centroid(est)
    rx, ry = centroid(ref)
    return shift_mask(est, math.floor(rx - ex + 0.5), math.floor(ry - ey + 0.5))


def dice(a: SilhouetteMask, b: SilhouetteMask) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatchError(f"{a.width}x{a.height} vs {b.width}x{b.height}")
    inter, na, nb = _kernels.overlap_counts(a.bits, b.bits)
    if na + nb == 0:
        return 0.0
    return 2.0 * inter / (na + nb)


# ---------------------------------------------------------------------------
# mask files (portable bitmap, P1 plain or P4 raw)

def _pbm_tokens(data: bytes):
    pos = 0
    n = len(data)
    while True:
        while pos < n and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        yield data[start:pos], pos


def read_pbm(path) -> SilhouetteMask:
    data = Path(path).read_bytes()
    tokens = _pbm_tokens(data)
    try:
        magic, _ = next(tokens)
        width = int(next(tokens)[0])
        height, pos = next(tokens)
        height = int(height)
    except (StopIteration, ValueError):
        raise FormatError("truncated or malformed PBM header", path) from None
    if magic == b"P4":
        raster = data[pos + 1:]
        row_bytes = (width + 7) // 8
        if len(raster) < row_bytes * height:
            raise FormatError("truncated P4 raster", path)
        packed = np.frombuffer(raster[:row_bytes * height], dtype=np.uint8).reshape(height, row_bytes)
        bits = np.unpackbits(packed, axis=1)[:, :width].astype(bool)
    elif magic == b"P1":
        body = re.sub(rb"#[^\r\n]*", b"", data[pos:])
        raw = np.frombuffer(body, dtype=np.uint8)
        digits = raw[(raw == ord("0")) | (raw == ord("1"))]
        if digits.size < width * height:
            raise FormatError("truncated P1 raster", path)
        bits = (digits[:width * height] == ord("1")).reshape(height, width)
    else:
        raise FormatError(f"unsupported bitmap magic {magic!r}", path)
    return SilhouetteMask(width, height, bits)


def write_pbm(mask: SilhouetteMask, path, raw: bool = False) -> None:
    if raw:
        packed = np.packbits(mask.bits.astype(np.uint8), axis=1)
        Path(path).write_bytes(f"P4\n{mask.width} {mask.height}\n".encode() + packed.tobytes())
        return
    lines = [f"P1\n{mask.width} {mask.height}"]
    chars = np.where(mask.bits, ord("1"), ord("0")).astype(np.uint8)
    for row in chars:
        text = row.tobytes().decode("ascii")
        # plain PBM lines should stay under 70 characters
        lines.extend(text[i:i + 64] for i in range(0, len(text), 64))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


# ---------------------------------------------------------------------------
# session-level evaluation

def _role_keyed(session: SessionDataset, people: Sequence[Detection]) -> dict:
    roles = [session.role_of(d) for d in people]
    if None in roles and len(people) == 2 and all(d.suit_score is not None for d in people):
        roles = assign_roles([RoleFeatures(d.suit_score) for d in people])
    out = {}
    for k, (det, role) in enumerate(zip(people, roles)):
        key = role.value if role is not None else (det.person_id or f"#{k}")
        out[key] = det
    return out


def _reference_mask(det: Detection, session: SessionDataset, bones, radius) -> Optional[SilhouetteMask]:
    if det.mask_path is not None:
        return read_pbm(det.mask_path)
    if det.skeleton is not None and radius is not None:
        return rasterize_projected(to_common(det.skeleton), session.camera_for(det), bones, radius)
    return None


def _frame_dice(gt_det, est_det, gt: SessionDataset, est: SessionDataset, bones, default_radius,
                compensate) -> float:
    if est_det is None or est_det.skeleton is None:
        return float("nan")
    radius = gt_det.neck_radius if gt_det.neck_radius is not None else default_radius
    if radius is None:
        return float("nan")
    ref = _reference_mask(gt_det, gt, bones, radius)
    if ref is None:
        return float("nan")
    sil = rasterize_projected(to_common(est_det.skeleton), est.camera_for(est_det), bones, radius,
                              dims=(ref.width, ref.height))
    if compensate and sil.count and ref.count:
        sil = align_centroids(sil, ref)
    return dice(sil, ref)


def evaluate_sessions(gt: SessionDataset, est: SessionDataset, *, bones: Optional[BoneGraph] = None,
                      default_radius: Optional[float] = None, centroid_compensation: bool = True,
                      person: Optional[str] = None, tilt: Optional[TiltModel] = None) -> EvalReport:
    """Score an estimated session against ground truth, frame by frame.

    People are matched by role (therapist/child) when known, else by id.
    Per-frame RMSE pools the common-set joints of all matched people, or of
    ``person`` (a role name or id) only. Dice uses the ground-truth mask when
    present, otherwise the rasterized ground-truth skeleton.
    """
    bones = default_bones() if bones is None else bones
    est_by_index = {fr.index: fr for fr in est.frames}
    idx, rmse, d_t, d_c, both, gt_both = [], [], [], [], [], []
    gt_roles, est_roles = {}, {}
    for fr in gt.frames:
        g = _role_keyed(gt, fr.people)
        efr = est_by_index.get(fr.index)
        e = _role_keyed(est, efr.people) if efr is not None else {}

        diffs = []
        for key, gdet in g.items():
            if person is not None and key != person and gdet.person_id != person:
                continue
            edet = e.get(key)
            if gdet.skeleton is None or edet is None or edet.skeleton is None:
                continue
            gs, es = to_common(gdet.skeleton), to_common(edet.skeleton)
            if tilt is not None:
                es = apply_tilt(es, tilt)
            names = [n for n in gs.names if n in es]
            diffs.append(gs.positions(names) - es.positions(names))
        diffs = [d for d in diffs if d.size]
        if diffs:
            D = np.concatenate(diffs)
            rmse.append(float(np.sqrt(np.mean(np.sum(D * D, axis=1)))))
        else:
            rmse.append(float("nan"))

        dices = {}
        for role in (Role.THERAPIST, Role.CHILD):
            gdet = g.get(role.value)
            if gdet is None:
                dices[role] = float("nan")
                continue
            dices[role] = _frame_dice(gdet, e.get(role.value), gt, est, bones, default_radius,
                                      centroid_compensation)
        d_t.append(dices[Role.THERAPIST])
        d_c.append(dices[Role.CHILD])

        gt_roles[fr.index] = [k for k, d in g.items() if d.skeleton is not None or d.mask_path is not None]
        est_roles[fr.index] = [k for k, d in e.items() if d.skeleton is not None]
        need = {Role.THERAPIST.value, Role.CHILD.value}
        gt_both.append(need <= set(gt_roles[fr.index]))
        both.append(need <= set(est_roles[fr.index]))
        idx.append(fr.index)

    try:
        rate = detection_rate(gt_roles, est_roles, (Role.THERAPIST.value, Role.CHILD.value))
    except InvalidInputError:
        rate = float("nan")
    return EvalReport(tuple(idx), np.array(rmse, dtype=float), np.array(d_t, dtype=float),
                      np.array(d_c, dtype=float), np.array(both, dtype=bool), np.array(gt_both, dtype=bool),
                      rate)


def fit_session_tilt(gt: SessionDataset, est: SessionDataset) -> TiltModel:
    """Fit the vertical tilt offset of ``est`` relative to ``gt`` over all matched joints."""
    est_by_index = {fr.index: fr for fr in est.frames}
    pairs = []
    for fr in gt.frames:
        efr = est_by_index.get(fr.index)
        if efr is None:
            continue
        g, e = _role_keyed(gt, fr.people), _role_keyed(est, efr.people)
        for key, gdet in g.items():
            edet = e.get(key)
            if gdet.skeleton is not None and edet is not None and edet.skeleton is not None:
                pairs.append((to_common(gdet.skeleton), to_common(edet.skeleton)))
    return fit_tilt(tilt_samples(pairs))


def session_depth_trace(session: SessionDataset, person: str, joint_name: str) -> tuple[list[int], np.ndarray]:
    """Depth trace of one person (role name or id) through a session."""
    frames = []
    for fr in session.frames:
        keyed = _role_keyed(session, fr.people)
        by_id = {d.person_id: d for d in fr.people if d.person_id is not None}
        det = keyed.get(person) or by_id.get(person)
        skel = det.skeleton if det is not None else None
        if skel is not None and joint_name not in JOINT_NAMES[skel.convention] and joint_name in COMMON_JOINTS:
            skel = to_common(skel)
        frames.append({person: skel})
    return [fr.index for fr in session.frames], depth_trace(frames, person, joint_name)
