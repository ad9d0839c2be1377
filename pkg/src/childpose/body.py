"""Skeleton and mesh value types plus the joint naming conventions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidInputError


class Convention(str, Enum):
    KINECT25 = "kinect25"
    SMPL24 = "smpl24"
    BEV = "bev"
    COMMON = "common"


class Role(str, Enum):
    THERAPIST = "therapist"
    CHILD = "child"


KINECT25_JOINTS = (
    "SpineBase", "SpineMid", "Neck", "Head",
    "ShoulderLeft", "ElbowLeft", "WristLeft", "HandLeft",
    "ShoulderRight", "ElbowRight", "WristRight", "HandRight",
    "HipLeft", "KneeLeft", "AnkleLeft", "FootLeft",
    "HipRight", "KneeRight", "AnkleRight", "FootRight",
    "SpineShoulder", "HandTipLeft", "ThumbLeft", "HandTipRight", "ThumbRight",
)

SMPL24_JOINTS = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)

# upper-body evaluation set shared by every system
COMMON_JOINTS = (
    "head", "neck", "spine", "hip",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
)

JOINT_NAMES: dict[Convention, tuple[str, ...]] = {
    Convention.KINECT25: KINECT25_JOINTS,
    Convention.SMPL24: SMPL24_JOINTS,
    # BEV's first 24 joints follow the SMPL ordering
    Convention.BEV: SMPL24_JOINTS,
    Convention.COMMON: COMMON_JOINTS,
}


def _as_point(name: str, value) -> np.ndarray:
    p = np.array(value, dtype=np.float64).reshape(-1)
    if p.shape != (3,):
        raise InvalidInputError(f"joint {name!r} must have 3 coordinates, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"joint {name!r} has non-finite coordinates")
    p.setflags(write=False)
    return p


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Named 3D joints in meters, camera frame, tagged with a naming convention.

    ``confidence`` is optional per joint; joints without an entry are taken as
    fully confident.
    """

    convention: Convention
    joints: Mapping[str, np.ndarray]
    confidence: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))
        joints = {str(k): _as_point(k, v) for k, v in self.joints.items()}
        conf = {}
        for k, c in self.confidence.items():
            c = float(c)
            if not 0.0 <= c <= 1.0:
                raise InvalidInputError(f"confidence of {k!r} outside [0, 1]: {c}")
            if k in joints:
                conf[k] = c
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "confidence", conf)

    @classmethod
    def from_array(cls, convention, names: Iterable[str], points, confidence=None) -> "Skeleton":
        names = list(names)
        pts = np.asarray(points, dtype=np.float64).reshape(len(names), 3)
        if len(set(names)) != len(names):
            raise InvalidInputError("joint names must be unique")
        conf = {} if confidence is None else dict(zip(names, confidence))
        return cls(convention, dict(zip(names, pts)), conf)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.joints)

    def __len__(self):
        return len(self.joints)

    def __contains__(self, name):
        return name in self.joints

    def __getitem__(self, name) -> np.ndarray:
        return self.joints[name]

    def positions(self, names=None) -> np.ndarray:
        names = self.names if names is None else names
        if not names:
            return np.zeros((0, 3))
        return np.stack([self.joints[n] for n in names])

    def conf(self, name) -> float:
        return self.confidence.get(name, 1.0)

    def with_positions(self, points, names=None) -> "Skeleton":
        names = self.names if names is None else tuple(names)
        pts = np.asarray(points, dtype=np.float64).reshape(len(names), 3)
        joints = dict(self.joints)
        joints.update(zip(names, pts))
        return Skeleton(self.convention, joints, self.confidence)

    def translated(self, offset) -> "Skeleton":
        off = np.asarray(offset, dtype=np.float64).reshape(3)
        return self.with_positions(self.positions() + off)

    def equals(self, other: "Skeleton", atol: float = 0.0) -> bool:
        if self.convention != other.convention or set(self.joints) != set(other.joints):
            return False
        if any(self.conf(n) != other.conf(n) for n in self.joints):
            return False
        return all(np.allclose(self.joints[n], other.joints[n], rtol=0, atol=atol) for n in self.joints)

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return self.equals(other)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 1:
            raise InvalidInputError(f"mesh vertices must be (N, 3) with N >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("mesh has non-finite vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    __hash__ = None
