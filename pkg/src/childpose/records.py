"""In-memory data model of a recorded (or simulated) session."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .body import Role, Skeleton
from .calibration import PersonProfile
from .errors import InvalidInputError
from .geometry import BoundingBox, CameraIntrinsics, WeakPerspectiveCam


@dataclass(frozen=True)
class Detection:
    """One person in one frame.

    Every field is optional so partial records load; ``usable`` tells whether
    the depth/translation equations can be applied.
    """

    person_id: Optional[str] = None
    role: Optional[Role] = None
    bbox: Optional[BoundingBox] = None
    wp: Optional[WeakPerspectiveCam] = None
    skeleton: Optional[Skeleton] = None
    mask_path: Optional[Path] = None
    suit_score: Optional[float] = None
    neck_radius: Optional[float] = None

    def __post_init__(self):
        if self.role is not None:
            object.__setattr__(self, "role", Role(self.role))
        if self.suit_score is not None and not 0.0 <= self.suit_score <= 1.0:
            raise InvalidInputError(f"suit score outside [0, 1]: {self.suit_score}")
        if self.neck_radius is not None and not (math.isfinite(self.neck_radius) and self.neck_radius >= 0):
            raise InvalidInputError(f"neck radius must be >= 0, got {self.neck_radius}")

    @property
    def usable(self) -> bool:
        return self.bbox is not None and self.wp is not None


@dataclass(frozen=True)
class FrameRecord:
    index: int
    people: tuple[Detection, ...] = ()
    timestamp: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "people", tuple(self.people))


@dataclass(frozen=True)
class SessionDataset:
    camera: CameraIntrinsics
    persons: tuple[PersonProfile, ...] = ()
    frames: tuple[FrameRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "persons", tuple(self.persons))
        object.__setattr__(self, "frames", tuple(self.frames))
        ids = [p.id for p in self.persons]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("duplicate person ids in session metadata")
        known = set(ids)
        prev = None
        for fr in self.frames:
            if prev is not None and fr.index <= prev:
                raise InvalidInputError(f"frame index {fr.index} does not increase (after {prev})")
            prev = fr.index
            for det in fr.people:
                if det.person_id is not None and det.person_id not in known:
                    raise InvalidInputError(f"frame {fr.index}: unknown person id {det.person_id!r}")

    def person(self, person_id: str) -> PersonProfile:
        for p in self.persons:
            if p.id == person_id:
                return p
        raise KeyError(person_id)

    def role_of(self, det: Detection) -> Optional[Role]:
        if det.role is not None:
            return det.role
        if det.person_id is not None:
            return self.person(det.person_id).role
        return None

    def camera_for(self, det: Detection) -> CameraIntrinsics:
        """Camera with the person's personalized focal length, when one is set."""
        if det.person_id is not None:
            f = self.person(det.person_id).personalized_f
            if f is not None:
                return self.camera.with_focal(f)
        return self.camera
