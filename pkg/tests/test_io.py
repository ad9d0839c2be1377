import csv
import json
import logging

import numpy as np
import pytest

from childpose.body import Skeleton
from childpose.calibration import FocalSample
from childpose.errors import FormatError
from childpose.io import (EVAL_COLUMNS, depth_svg, load_session, read_points_csv, save_session,
                          write_depth_csv, write_eval_csv, write_points_csv)
from childpose.metrics import evaluate_sessions, read_pbm
from childpose.simulate import SimConfig, simulate, to_sessions, write_simulation

HEADER = {"type": "session", "camera": {"f": 400.0, "w": 512, "h": 424},
          "persons": [{"id": "T1", "role": "therapist", "height": 1.75},
                      {"id": "C1", "role": "child", "height": 0.9}]}


def person(pid="C1", **kw):
    doc = {"id": pid, "bbox": [100, 160, 120, 300], "s": 1.2, "x": 0.01, "y": -0.02,
           "skeleton": {"convention": "common", "joints": {"hip": [0.1, 0.2, 2.0]}}}
    doc.update(kw)
    return doc


def write_lines(path, *docs):
    path.write_text("".join(json.dumps(d) + "\n" for d in docs))
    return path


class TestSessionFile:
    def test_round_trip(self, tmp_path):
        cfg = SimConfig(frames_per_waypoint=2, noise_s=0.02, noise_bbox=1.0, seed=4)
        gt_path, est_path = write_simulation(simulate(cfg), cfg, tmp_path)
        est = load_session(est_path)
        _, want = to_sessions(simulate(cfg), cfg)
        assert est.camera == want.camera and est.persons == want.persons
        for a, b in zip(est.frames, want.frames):
            assert a.index == b.index and a.timestamp == b.timestamp
            assert a.people == b.people
        save_session(est, tmp_path / "again.jsonl")
        assert (tmp_path / "again.jsonl").read_text() == est_path.read_text()

    def test_masks_resolve(self, tmp_path):
        cfg = SimConfig(frames_per_waypoint=1)
        frames = simulate(cfg)
        gt_path, _ = write_simulation(frames, cfg, tmp_path)
        gt = load_session(gt_path)
        det = gt.frames[0].people[1]
        assert read_pbm(det.mask_path) == frames[0].gt_masks[1]
        doc = json.loads(gt_path.read_text().splitlines()[1])
        assert doc["people"][0]["mask"] == "masks/000000_T0.pbm"

    def test_decreasing_index_reports_line(self, tmp_path):
        p = write_lines(tmp_path / "s.jsonl", HEADER, {"frame": 3, "people": []}, {"frame": 2, "people": []})
        with pytest.raises(FormatError) as ei:
            load_session(p)
        assert ei.value.line == 3

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "s.jsonl"
        p.write_text(json.dumps(HEADER) + "\n{\"frame\": 0,\n")
        with pytest.raises(FormatError) as ei:
            load_session(p)
        assert ei.value.line == 2

    def test_missing_header(self, tmp_path):
        with pytest.raises(FormatError):
            load_session(write_lines(tmp_path / "s.jsonl", {"frame": 0, "people": []}))
        (tmp_path / "e.jsonl").write_text("")
        with pytest.raises(FormatError):
            load_session(tmp_path / "e.jsonl")

    def test_unknown_person(self, tmp_path):
        p = write_lines(tmp_path / "s.jsonl", HEADER, {"frame": 0, "people": [person("X9")]})
        with pytest.raises(FormatError):
            load_session(p)

    def test_missing_scale_is_unusable(self, tmp_path):
        doc = person()
        del doc["s"]
        s = load_session(write_lines(tmp_path / "s.jsonl", HEADER, {"frame": 0, "people": [doc]}))
        det = s.frames[0].people[0]
        assert det.wp is None and not det.usable and det.skeleton is not None

    @pytest.mark.parametrize("field,value", [("s", 0.0), ("s", -1.0), ("bbox", [10, 10, 0, 5])])
    def test_degenerate_inputs_warn(self, tmp_path, caplog, field, value):
        p = write_lines(tmp_path / "s.jsonl", HEADER, {"frame": 0, "people": [person(**{field: value})]})
        det = load_session(p).frames[0].people[0]
        assert not det.usable
        assert "unusable" in caplog.text

    def test_unknown_field_warns(self, tmp_path, caplog):
        p = write_lines(tmp_path / "s.jsonl", HEADER, {"frame": 0, "people": [person(colour="red")]})
        load_session(p)
        assert any("colour" in r.getMessage() and r.levelno == logging.WARNING for r in caplog.records)

    def test_missing_mask_file(self, tmp_path):
        p = write_lines(tmp_path / "s.jsonl", HEADER, {"frame": 0, "people": [person(mask="masks/nope.pbm")]})
        with pytest.raises(FormatError) as ei:
            load_session(p)
        assert ei.value.line == 2 and "nope.pbm" in str(ei.value)

    def test_blank_lines_skipped(self, tmp_path):
        p = tmp_path / "s.jsonl"
        p.write_text(json.dumps(HEADER) + "\n\n" + json.dumps({"frame": 0, "people": [person()]}) + "\n")
        assert len(load_session(p).frames) == 1


class TestCsv:
    def test_eval_csv(self, tmp_path):
        cfg = SimConfig(frames_per_waypoint=1, waypoints=(2.0, 2.5))
        gt, est = to_sessions(simulate(cfg), cfg)
        rep = evaluate_sessions(gt, est)
        write_eval_csv(rep, tmp_path / "e.csv")
        rows = list(csv.reader(open(tmp_path / "e.csv")))
        assert tuple(rows[0]) == EVAL_COLUMNS and len(rows) == 3
        assert rows[1][0] == "0" and rows[1][4] == "1"
        assert float(rows[1][1]) == pytest.approx(rep.rmse[0], abs=5e-7)
        assert all(len(c.split(".")[1]) == 6 for c in rows[1][1:4])

    def test_nan_written_empty(self, tmp_path):
        write_depth_csv([0, 1], np.array([2.0, np.nan]), tmp_path / "d.csv")
        assert (tmp_path / "d.csv").read_text() == "frame,depth_m\n0,2.000000\n1,\n"

    def test_points_round_trip(self, tmp_path):
        rows = [(FocalSample("T1", 2.0, 423.0, (0, 9)), 1.75), (FocalSample("C1", 1.5, 283.25, (10, 19)), 0.9)]
        write_points_csv(rows, tmp_path / "p.csv")
        pts = read_points_csv(tmp_path / "p.csv")
        assert [(p.height, p.f, p.weight) for p in pts] == [(1.75, 423.0, 1 / 16), (0.9, 283.25, 1.5 ** -4)]

    def test_points_weight_defaults(self, tmp_path):
        (tmp_path / "p.csv").write_text("height_m,focal_px,known_depth_m\n1.0,300,2\n1.2,320,\n")
        assert [p.weight for p in read_points_csv(tmp_path / "p.csv")] == [1 / 16, 1.0]

    def test_points_errors(self, tmp_path):
        (tmp_path / "p.csv").write_text("height,focal\n1,2\n")
        with pytest.raises(FormatError):
            read_points_csv(tmp_path / "p.csv")
        (tmp_path / "q.csv").write_text("height_m,focal_px\n1.0,300\nabc,1\n")
        with pytest.raises(FormatError) as ei:
            read_points_csv(tmp_path / "q.csv")
        assert ei.value.line == 3


def test_depth_svg_splits_gaps():
    svg = depth_svg([0, 1, 2, 3, 4], np.array([2.0, 2.1, np.nan, 2.3, 2.2]))
    assert svg.count("<polyline") == 2 and svg.startswith("<svg")
    assert "<polyline" not in depth_svg([0, 1], np.array([np.nan, np.nan]))


def test_skeleton_confidence_survives(tmp_path):
    import dataclasses

    from childpose.records import Detection, FrameRecord, SessionDataset
    from childpose.geometry import CameraIntrinsics
    from childpose.calibration import PersonProfile

    sk = Skeleton("common", {"hip": (0, 0, 2), "head": (0, -0.6, 2)}, {"head": 0.4})
    ds = SessionDataset(CameraIntrinsics(400, 512, 424), (PersonProfile("C1", "child", 0.9, 280.0),),
                        (FrameRecord(5, (Detection(person_id="C1", skeleton=sk),), 0.5),))
    save_session(ds, tmp_path / "s.jsonl")
    back = load_session(tmp_path / "s.jsonl")
    assert back.frames[0].people[0].skeleton == sk
    assert back.persons[0].personalized_f == 280.0
    assert dataclasses.replace(back, frames=()).frames == ()
