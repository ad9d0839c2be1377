"""Session files (JSON lines), CSV reports and SVG depth plots.

A session file holds one JSON object per line. The first line is the
header::

    {"type": "session", "camera": {"f": 400.0, "w": 512, "h": 424, "mu": 2.0},
     "persons": [{"id": "T1", "role": "therapist", "height": 1.75}]}

and each following line is a frame::

    {"frame": 0, "timestamp": 0.0, "people": [
        {"id": "T1", "role": "therapist", "bbox": [x_min, x_max, y_min, y_max],
         "s": 1.1, "x": 0.02, "y": -0.1,
         "skeleton": {"convention": "common", "joints": {"head": [x, y, z]}, "confidence": {}},
         "mask": "masks/000000_T1.pbm", "suit_score": 0.9, "neck_radius": 6.5}]}

Mask paths are relative to the session file. Lengths are meters, image
quantities pixels.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .body import Skeleton
from .calibration import FocalSample, HeightFocalPoint, PersonProfile
from .errors import ChildPoseError, FormatError, InvalidInputError
from .geometry import BoundingBox, CameraIntrinsics, WeakPerspectiveCam
from .metrics import EvalReport
from .records import Detection, FrameRecord, SessionDataset

log = logging.getLogger(__name__)

_HEADER_KEYS = {"type", "camera", "persons"}
_FRAME_KEYS = {"frame", "timestamp", "people"}
_PERSON_KEYS = {"id", "role", "bbox", "s", "x", "y", "skeleton", "mask", "suit_score", "neck_radius"}


def _warn_unknown(obj: dict, known: set, where: str) -> None:
    extra = sorted(set(obj) - known)
    if extra:
        log.warning("%s: ignoring unknown field(s) %s", where, extra)


def _skeleton_from_json(doc: dict) -> Skeleton:
    return Skeleton(doc["convention"], {k: v for k, v in doc["joints"].items()}, doc.get("confidence", {}))


def _skeleton_to_json(skel: Skeleton) -> dict:
    doc = {"convention": skel.convention.value,
           "joints": {k: [float(c) for c in v] for k, v in skel.joints.items()}}
    if skel.confidence:
        doc["confidence"] = dict(skel.confidence)
    return doc


def _detection_from_json(doc: dict, base: Path, where: str) -> Detection:
    _warn_unknown(doc, _PERSON_KEYS, where)
    bbox = None
    if doc.get("bbox") is not None:
        x_min, x_max, y_min, y_max = (float(v) for v in doc["bbox"])
        try:
            bbox = BoundingBox(x_min, x_max, y_min, y_max)
        except InvalidInputError as exc:
            log.warning("%s: %s; record unusable for depth/translation", where, exc)
    wp = None
    if doc.get("s") is not None:
        try:
            wp = WeakPerspectiveCam(float(doc["s"]), float(doc.get("x", 0.0)), float(doc.get("y", 0.0)))
        except InvalidInputError as exc:
            log.warning("%s: %s; record unusable for depth/translation", where, exc)
    mask = None
    if doc.get("mask") is not None:
        mask = Path(doc["mask"])
        if not mask.is_absolute():
            mask = base / mask
        if not mask.is_file():
            raise InvalidInputError(f"mask file {mask} does not exist")
    skel = _skeleton_from_json(doc["skeleton"]) if doc.get("skeleton") is not None else None
    return Detection(
        person_id=None if doc.get("id") is None else str(doc["id"]),
        role=doc.get("role"),
        bbox=bbox,
        wp=wp,
        skeleton=skel,
        mask_path=mask,
        suit_score=None if doc.get("suit_score") is None else float(doc["suit_score"]),
        neck_radius=None if doc.get("neck_radius") is None else float(doc["neck_radius"]),
    )


def load_session(path) -> SessionDataset:
    path = Path(path)
    base = path.parent
    camera = None
    persons: list[PersonProfile] = []
    frames: list[FrameRecord] = []
    known_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                doc = json.loads(raw)
                if not isinstance(doc, dict):
                    raise ValueError("expected a JSON object")
                if camera is None:
                    if doc.get("type") != "session":
                        raise ValueError("first line must be the session header")
                    _warn_unknown(doc, _HEADER_KEYS, f"{path}:{lineno}")
                    cam = doc["camera"]
                    camera = CameraIntrinsics(float(cam["f"]), int(cam["w"]), int(cam["h"]),
                                              float(cam.get("mu", 2.0)))
                    for p in doc.get("persons", []):
                        persons.append(PersonProfile(str(p["id"]), p["role"], float(p["height"]),
                                                     None if p.get("personalized_f") is None
                                                     else float(p["personalized_f"])))
                    known_ids = {p.id for p in persons}
                    continue
                _warn_unknown(doc, _FRAME_KEYS, f"{path}:{lineno}")
                index = int(doc["frame"])
                if frames and index <= frames[-1].index:
                    raise ValueError(f"frame index {index} not greater than previous {frames[-1].index}")
                where = f"{path}:{lineno}"
                people = tuple(_detection_from_json(p, base, where) for p in doc.get("people", []))
                for det in people:
                    if det.person_id is not None and det.person_id not in known_ids:
                        raise ValueError(f"person id {det.person_id!r} not in session metadata")
                ts = doc.get("timestamp")
                frames.append(FrameRecord(index, people, None if ts is None else float(ts)))
            except (ValueError, KeyError, TypeError, ChildPoseError) as exc:
                if isinstance(exc, FormatError):
                    raise
                msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
                raise FormatError(msg, path, lineno) from None
    if camera is None:
        raise FormatError("empty session file", path)
    return SessionDataset(camera, tuple(persons), tuple(frames))


def _detection_to_json(det: Detection, base: Path) -> dict:
    doc: dict = {}
    if det.person_id is not None:
        doc["id"] = det.person_id
    if det.role is not None:
        doc["role"] = det.role.value
    if det.bbox is not None:
        b = det.bbox
        doc["bbox"] = [b.x_min, b.x_max, b.y_min, b.y_max]
    if det.wp is not None:
        doc.update(s=det.wp.s, x=det.wp.x, y=det.wp.y)
    if det.skeleton is not None:
        doc["skeleton"] = _skeleton_to_json(det.skeleton)
    if det.mask_path is not None:
        try:
            doc["mask"] = Path(os.path.relpath(det.mask_path, base)).as_posix()
        except ValueError:
            doc["mask"] = str(det.mask_path)
    if det.suit_score is not None:
        doc["suit_score"] = det.suit_score
    if det.neck_radius is not None:
        doc["neck_radius"] = det.neck_radius
    return doc


def session_lines(dataset: SessionDataset, base: Path) -> Iterable[str]:
    cam = dataset.camera
    header = {"type": "session",
              "camera": {"f": cam.f, "w": cam.w, "h": cam.h, "mu": cam.mu},
              "persons": [{"id": p.id, "role": p.role.value, "height": p.height,
                           **({} if p.personalized_f is None else {"personalized_f": p.personalized_f})}
                          for p in dataset.persons]}
    yield json.dumps(header)
    for fr in dataset.frames:
        doc = {"frame": fr.index}
        if fr.timestamp is not None:
            doc["timestamp"] = fr.timestamp
        doc["people"] = [_detection_to_json(d, base) for d in fr.people]
        yield json.dumps(doc)


def save_session(dataset: SessionDataset, path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in session_lines(dataset, base):
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# CSV / SVG

def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    return "" if math.isnan(value) else f"{value:.6f}"


EVAL_COLUMNS = ("frame", "rmse_m", "dice_therapist", "dice_child", "detected_both")


def write_eval_csv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for k, frame in enumerate(report.frames):
            w.writerow([frame, _fmt(report.rmse[k]), _fmt(report.dice_therapist[k]),
                        _fmt(report.dice_child[k]), int(bool(report.detected_both[k]))])


POINT_COLUMNS = ("person_id", "height_m", "known_depth_m", "focal_px", "weight", "frame_start", "frame_end")


def write_points_csv(rows: Sequence[tuple[FocalSample, float]], path) -> None:
    """Focal samples with the person's height, one row each."""
    from .calibration import weight_from_depth

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINT_COLUMNS)
        for sample, height in rows:
            w.writerow([sample.person_id, _fmt(height), _fmt(sample.known_depth), _fmt(sample.measured_f),
                        repr(weight_from_depth(sample.known_depth)), *sample.frame_window])


def read_points_csv(path) -> list[HeightFocalPoint]:
    """Read (height, f, weight) points; ``weight`` defaults to 1/Z**4 from ``known_depth_m``, else 1."""
    from .calibration import weight_from_depth

    points = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"height_m", "focal_px"} <= set(reader.fieldnames):
            raise FormatError("points file needs height_m and focal_px columns", path, 1)
        for lineno, row in enumerate(reader, 2):
            try:
                if row.get("weight"):
                    weight = float(row["weight"])
                elif row.get("known_depth_m"):
                    weight = weight_from_depth(float(row["known_depth_m"]))
                else:
                    weight = 1.0
                points.append(HeightFocalPoint(float(row["height_m"]), float(row["focal_px"]), weight))
            except (ValueError, TypeError, ChildPoseError) as exc:
                raise FormatError(str(exc), path, lineno) from None
    return points


def write_depth_csv(frames: Sequence[int], depths: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("frame", "depth_m"))
        for frame, z in zip(frames, depths):
            w.writerow([frame, _fmt(z)])


def depth_svg(frames: Sequence[int], depths: np.ndarray, width: int = 640, height: int = 240,
              margin: int = 20) -> str:
    """Polyline plot of a depth trace; gaps (NaN) split the line."""
    frames = np.asarray(frames, dtype=float)
    z = np.asarray(depths, dtype=float)
    valid = ~np.isnan(z)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    if valid.any():
        f0, f1 = frames.min(), frames.max()
        z0, z1 = z[valid].min(), z[valid].max()
        fs = (width - 2 * margin) / (f1 - f0 if f1 > f0 else 1.0)
        zs = (height - 2 * margin) / (z1 - z0 if z1 > z0 else 1.0)
        run: list[str] = []
        runs = []
        for fr, d in zip(frames, z):
            if np.isnan(d):
                if run:
                    runs.append(run)
                run = []
                continue
            run.append(f"{margin + (fr - f0) * fs:.2f},{height - margin - (d - z0) * zs:.2f}")
        if run:
            runs.append(run)
        for r in runs:
            out.append(f'<polyline fill="none" stroke="black" stroke-width="1.5" points="{" ".join(r)}"/>')
        out.append(f'<text x="{margin}" y="{margin - 6}" font-size="10">depth {z0:.3f}-{z1:.3f} m</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
