"""Mesh -> skeleton regression, cross-convention joint maps, retranslation and role assignment."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .body import COMMON_JOINTS, JOINT_NAMES, SMPL24_JOINTS, Convention, Mesh, Role, Skeleton
from .errors import (AmbiguousRoleError, DimensionMismatchError, FormatError, InvalidInputError,
                     UnsupportedCardinalityError)
from .geometry import BoundingBox, CameraIntrinsics, WeakPerspectiveCam, translation_vector

log = logging.getLogger(__name__)

CONFIG_DIR_ENV = "CHILDPOSE_CONFIG_DIR"


@dataclass(frozen=True)
class JointRegressor:
    """Sparse K x N linear map from mesh vertices to K named joints."""

    weights: sp.csr_matrix
    joint_names: tuple[str, ...]
    convention: Convention = Convention.SMPL24

    def __post_init__(self):
        W = sp.csr_matrix(self.weights, dtype=np.float64)
        names = tuple(self.joint_names)
        if W.shape[0] != len(names):
            raise DimensionMismatchError(f"{W.shape[0]} regressor rows but {len(names)} joint names")
        if len(set(names)) != len(names):
            raise InvalidInputError("regressor joint names must be unique")
        W.eliminate_zeros()
        empty = np.flatnonzero(np.diff(W.indptr) == 0)
        if empty.size:
            raise InvalidInputError(f"regressor rows without weights: {empty.tolist()}")
        sums = np.asarray(W.sum(axis=1)).ravel()
        off = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
        if off.size:
            log.warning("regressor rows %s do not sum to 1 (not a convex combination)", off.tolist())
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "convention", Convention(self.convention))

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


def regress_joints(mesh: Mesh, J: JointRegressor) -> Skeleton:
    if J.shape[1] != mesh.vertex_count:
        raise DimensionMismatchError(f"regressor expects {J.shape[1]} vertices, mesh has {mesh.vertex_count}")
    joints = J.weights @ mesh.vertices
    return Skeleton.from_array(J.convention, J.joint_names, joints)


def load_regressor(path, joint_names: Optional[Sequence[str]] = None,
                   convention: Convention = Convention.SMPL24) -> JointRegressor:
    """Read the triplet text format: a ``K N`` header, then ``row col weight`` lines.

    Lines starting with ``#`` are comments; ``# names: a b c`` supplies joint
    names when ``joint_names`` is not given.
    """
    shape = None
    rows, cols, vals = [], [], []
    file_names = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("names:"):
                    file_names = body[len("names:"):].split()
                continue
            parts = line.split()
            try:
                if shape is None:
                    if len(parts) != 2:
                        raise ValueError("header must be 'K N'")
                    shape = (int(parts[0]), int(parts[1]))
                    continue
                if len(parts) != 3:
                    raise ValueError("expected 'row col weight'")
                r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
            if not (0 <= r < shape[0] and 0 <= c < shape[1]):
                raise FormatError(f"index ({r}, {c}) outside {shape}", path, lineno)
            rows.append(r)
            cols.append(c)
            vals.append(v)
    if shape is None:
        raise FormatError("missing 'K N' header", path)
    names = joint_names or file_names
    if names is None:
        names = SMPL24_JOINTS if shape[0] == 24 else tuple(f"joint{k}" for k in range(shape[0]))
    W = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    return JointRegressor(W, tuple(names), convention)


def save_regressor(J: JointRegressor, path) -> None:
    coo = J.weights.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# names: " + " ".join(J.joint_names) + "\n")
        fh.write(f"{J.shape[0]} {J.shape[1]}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}\n")


@dataclass(frozen=True)
class JointMap:
    """Target joint <- one source joint, or the midpoint of two."""

    source: Convention
    entries: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        object.__setattr__(self, "source", Convention(self.source))
        entries = tuple((str(t), tuple(srcs)) for t, srcs in self.entries)
        targets = [t for t, _ in entries]
        if len(set(targets)) != len(targets):
            raise InvalidInputError("joint map targets must be unique")
        known = set(JOINT_NAMES[self.source])
        for t, srcs in entries:
            if not 1 <= len(srcs) <= 2:
                raise InvalidInputError(f"target {t!r} needs one or two sources")
            bad = [s for s in srcs if s not in known]
            if bad:
                raise InvalidInputError(f"{bad} are not {self.source.value} joints")
        object.__setattr__(self, "entries", entries)

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.entries)


def parse_joint_map(text: str, source: Convention, path=None) -> JointMap:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "<-" not in line:
            raise FormatError("expected 'target <- source1[,source2]'", path, lineno)
        target, srcs = (s.strip() for s in line.split("<-", 1))
        sources = tuple(s.strip() for s in srcs.split(",") if s.strip())
        if not target or not sources:
            raise FormatError("empty target or source list", path, lineno)
        entries.append((target, sources))
    try:
        return JointMap(source, tuple(entries))
    except InvalidInputError as exc:
        raise FormatError(str(exc), path) from None


def load_joint_map(path, source: Convention) -> JointMap:
    return parse_joint_map(Path(path).read_text(encoding="utf-8"), source, path)


def _config_text(filename: str) -> str:
    cfg_dir = os.environ.get(CONFIG_DIR_ENV)
    if cfg_dir:
        candidate = Path(cfg_dir) / filename
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
    return resources.files("childpose").joinpath("data", filename).read_text(encoding="utf-8")


def default_joint_map(source: Convention) -> JointMap:
    """Shipped map from ``source`` to the common upper-body set.

    A file of the same name in ``$CHILDPOSE_CONFIG_DIR`` overrides it.
    """
    source = Convention(source)
    if source is Convention.COMMON:
        return JointMap(source, tuple((n, (n,)) for n in COMMON_JOINTS))
    name = f"{source.value}_to_common.map"
    return parse_joint_map(_config_text(name), source, name)


def map_to_common(skel: Skeleton, jmap: JointMap) -> Skeleton:
    if skel.convention is not jmap.source:
        raise InvalidInputError(f"map expects {jmap.source.value}, skeleton is {skel.convention.value}")
    joints, conf = {}, {}
    for target, sources in jmap.entries:
        missing = [s for s in sources if s not in skel]
        if missing:
            log.warning("omitting %r: source joint(s) %s missing", target, missing)
            continue
        joints[target] = np.mean([skel[s] for s in sources], axis=0)
        if any(s in skel.confidence for s in sources):
            conf[target] = float(np.mean([skel.conf(s) for s in sources]))
    if not joints:
        raise InvalidInputError("no joint of the map could be produced")
    return Skeleton(Convention.COMMON, joints, conf)


def to_common(skel: Skeleton) -> Skeleton:
    if skel.convention is Convention.COMMON:
        return skel
    return map_to_common(skel, default_joint_map(skel.convention))


Retranslatable = Union[Mesh, Skeleton, np.ndarray]


def translation_delta(bbox: BoundingBox, wp: WeakPerspectiveCam,
                      cam_old: CameraIntrinsics, cam_new: CameraIntrinsics) -> np.ndarray:
    if (cam_old.w, cam_old.h, cam_old.mu) != (cam_new.w, cam_new.h, cam_new.mu):
        raise InvalidInputError("retranslation needs matching image size and mu")
    return translation_vector(cam_new, bbox, wp).t - translation_vector(cam_old, bbox, wp).t


def retranslate(obj: Retranslatable, bbox: BoundingBox, wp: WeakPerspectiveCam,
                cam_old: CameraIntrinsics, cam_new: CameraIntrinsics):
    """Move a reconstruction from the translation implied by ``cam_old`` to that of ``cam_new``."""
    delta = translation_delta(bbox, wp, cam_old, cam_new)
    if isinstance(obj, Skeleton):
        return obj.translated(delta)
    if isinstance(obj, Mesh):
        return Mesh(obj.vertices + delta)
    return np.asarray(obj, dtype=np.float64) + delta


@dataclass(frozen=True)
class RoleFeatures:
    suit_score: float
    bbox_height: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.suit_score <= 1.0:
            raise InvalidInputError(f"suit score outside [0, 1]: {self.suit_score}")


def assign_roles(features: Sequence[RoleFeatures]) -> list[Role]:
    """Therapist is the detection with the higher suit score; the other is the child."""
    if len(features) != 2:
        raise UnsupportedCardinalityError(f"role assignment needs exactly 2 detections, got {len(features)}")
    a, b = features[0].suit_score, features[1].suit_score
    if a == b:
        raise AmbiguousRoleError(f"equal suit scores ({a})")
    return [Role.THERAPIST, Role.CHILD] if a > b else [Role.CHILD, Role.THERAPIST]


def retranslate_session(session, profiles=None):
    """Re-place every usable detection using its person's personalized focal length.

    ``profiles`` defaults to the session's own person metadata; people
    without a personalized focal length are left untouched.
    """
    from dataclasses import replace

    profiles = session.persons if profiles is None else tuple(profiles)
    by_id = {p.id: p for p in profiles}
    frames = []
    for fr in session.frames:
        people = []
        for det in fr.people:
            prof = by_id.get(det.person_id)
            if prof is None or prof.personalized_f is None or det.skeleton is None:
                people.append(det)
                continue
            if not det.usable:
                log.warning("frame %d: %r has no usable box/scale, not retranslated", fr.index, det.person_id)
                people.append(det)
                continue
            cam_new = session.camera.with_focal(prof.personalized_f)
            people.append(replace(det, skeleton=retranslate(det.skeleton, det.bbox, det.wp, session.camera, cam_new)))
        frames.append(replace(fr, people=tuple(people)))
    known = {p.id for p in profiles}
    persons = tuple(profiles) + tuple(p for p in session.persons if p.id not in known)
    return replace(session, persons=persons, frames=tuple(frames))
