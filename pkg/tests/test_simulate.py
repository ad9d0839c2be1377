import numpy as np
import pytest

from childpose.calibration import (RansacConfig, focal_sample_from_window, height_focal_point, personalize,
                                   ransac_fit, weighted_least_squares)
from childpose.errors import InvalidInputError
from childpose.metrics import evaluate_sessions, session_depth_trace
from childpose.simulate import (BODY_PROPORTIONS, ROOT_JOINT, SimConfig, body_joints, dropout_mask,
                                inject_kinect_dropout, sample_calibration_points, simulate, to_sessions)
from childpose.skeleton import retranslate_session


def window(frames, k, depth):
    return [fr.detections[k] for fr in frames if fr.depth == depth]


class TestBody:
    def test_root_and_proportions(self):
        sk = body_joints(1.5, np.array([0.2, 0.1, 2.0]))
        np.testing.assert_allclose(sk[ROOT_JOINT], (0.2, 0.1, 2.0))
        head_above_hip = (BODY_PROPORTIONS["head"][1] - BODY_PROPORTIONS["hip"][1]) * 1.5
        # y grows downwards in camera coordinates
        assert sk["hip"][1] - sk["head"][1] == pytest.approx(head_above_hip)


class TestExactRecovery:
    def test_focal_recovered_without_noise(self):
        cfg = SimConfig(frames_per_waypoint=3)
        frames = simulate(cfg)
        for k, (h, _) in enumerate(cfg.persons):
            for z in cfg.waypoints:
                s = focal_sample_from_window(window(frames, k, z), z, cfg.mu)
                assert s.measured_f == pytest.approx(cfg.true_focal(h), rel=1e-9)

    def test_height_line_recovered(self):
        heights = (0.9, 1.2, 1.5, 1.75)
        cfg = SimConfig(persons=tuple((h, "child") for h in heights), frames_per_waypoint=2)
        frames = simulate(cfg)
        points = [height_focal_point(focal_sample_from_window(window(frames, k, z), z), h)
                  for k, h in enumerate(heights) for z in cfg.waypoints]
        for model in (ransac_fit(points), weighted_least_squares(points)):
            assert model.slope == pytest.approx(164.47, rel=1e-9)
            assert model.intercept == pytest.approx(135.23, rel=1e-9)

    def test_reconstruction_exact_with_true_focal(self):
        cfg = SimConfig(frames_per_waypoint=1)
        for k, (h, _) in enumerate(cfg.persons):
            one = SimConfig(persons=((h, "child"),), frames_per_waypoint=1)
            for fr in simulate(one):
                np.testing.assert_allclose(fr.detections[0].skeleton.positions(),
                                           fr.gt_skeletons[0].positions(), atol=1e-9)
        assert k == 1

    def test_personalized_pipeline_reproduces_depths(self):
        cfg = SimConfig(frames_per_waypoint=2)
        gt, est = to_sessions(simulate(cfg), cfg)
        fixed = retranslate_session(est, personalize(est.persons, _true_model(cfg)))
        for pid in cfg.person_ids:
            _, d_gt = session_depth_trace(gt, pid, "hip")
            _, d_fix = session_depth_trace(fixed, pid, "hip")
            np.testing.assert_allclose(d_fix, d_gt, atol=1e-6)
        rep = evaluate_sessions(gt, fixed)
        assert np.nanmax(rep.rmse) < 1e-9
        assert rep.detection_rate == 100.0

    def test_child_too_far_with_adult_focal(self):
        cfg = SimConfig(frames_per_waypoint=1)
        gt, est = to_sessions(simulate(cfg), cfg)
        _, d_gt = session_depth_trace(gt, "C1", "hip")
        _, d_est = session_depth_trace(est, "C1", "hip")
        ratio = cfg.true_focal(1.75) / cfg.true_focal(0.9)
        np.testing.assert_allclose(d_est, d_gt * ratio, rtol=1e-12)
        assert np.all(d_est > d_gt)


def _true_model(cfg):
    from childpose.calibration import LinearModel
    return LinearModel(cfg.slope, cfg.intercept)


class TestNoise:
    def test_seed_determinism(self):
        cfg = SimConfig(noise_s=0.05, noise_bbox=2.0, outlier_fraction=0.1, seed=7, frames_per_waypoint=3)
        a, b = simulate(cfg), simulate(cfg)
        for fa, fb in zip(a, b):
            assert fa.detections == fb.detections
        c = simulate(SimConfig(noise_s=0.05, noise_bbox=2.0, outlier_fraction=0.1, seed=8, frames_per_waypoint=3))
        assert any(fa.detections != fc.detections for fa, fc in zip(a, c))

    def test_zero_noise_ignores_seed(self):
        a = simulate(SimConfig(seed=1, frames_per_waypoint=1))
        b = simulate(SimConfig(seed=2, frames_per_waypoint=1))
        assert [f.detections for f in a] == [f.detections for f in b]

    def test_outliers_change_scale(self):
        cfg = SimConfig(outlier_fraction=0.5, frames_per_waypoint=20, seed=3)
        clean = simulate(SimConfig(frames_per_waypoint=20, seed=3))
        changed = sum(a.detections[0].wp.s != b.detections[0].wp.s for a, b in zip(simulate(cfg), clean))
        assert 20 < changed < 80

    def test_invalid_config(self):
        with pytest.raises(InvalidInputError):
            SimConfig(outlier_fraction=1.0)
        with pytest.raises(InvalidInputError):
            SimConfig(persons=((1.0, "parent"),))
        with pytest.raises(ValueError):
            SimConfig(waypoints=(0.0,))


class TestDropout:
    def test_zero(self):
        assert not dropout_mask(1000, 0.0, 1).any()

    def test_full(self):
        cfg = SimConfig(frames_per_waypoint=2)
        gt, est = to_sessions(simulate(cfg), cfg)
        est = est.__class__(est.camera, est.persons, tuple(inject_kinect_dropout(est.frames, 1.0, 5)))
        assert evaluate_sessions(gt, est).detection_rate == 0.0

    def test_quarter_matches_oracle(self):
        mask = dropout_mask(1000, 0.25, 42)
        expected = int(np.sum(np.random.default_rng(42).random(1000) < 0.25))
        assert mask.sum() == expected
        assert abs(expected - 250) < 60

    def test_rate_follows_mask(self):
        cfg = SimConfig(frames_per_waypoint=8)
        gt, est = to_sessions(simulate(cfg), cfg)
        frames = inject_kinect_dropout(est.frames, 0.25, 9)
        est = est.__class__(est.camera, est.persons, tuple(frames))
        kept = 1 - dropout_mask(len(frames), 0.25, 9).mean()
        assert evaluate_sessions(gt, est).detection_rate == pytest.approx(100 * kept)

    def test_bad_fraction(self):
        with pytest.raises(InvalidInputError):
            dropout_mask(3, 1.5, 0)


class TestCalibrationPoints:
    def test_exact_outlier_count(self):
        pts, out = sample_calibration_points(164.47, 135.23, np.linspace(0.8, 1.9, 40), 2.0,
                                             noise_scale=0.0, outlier_fraction=0.2, seed=1)
        assert out.sum() == 8 and len(pts) == 40
        for p, o in zip(pts, out):
            off = abs(p.f - (164.47 * p.height + 135.23))
            assert (off >= 60) if o else (off < 1e-9)

    def test_weights(self):
        pts, _ = sample_calibration_points(1.0, 300.0, [1.0, 1.0], [1.0, 2.0])
        assert [p.weight for p in pts] == [1.0, 1 / 16]

    def test_recovery_with_outliers(self):
        pts, out = sample_calibration_points(164.47, 135.23, np.tile(np.linspace(0.8, 1.9, 10), 4),
                                             np.repeat([1.3, 1.9, 2.5, 3.0], 10), noise_scale=0.2,
                                             outlier_fraction=0.2, seed=11)
        m = ransac_fit(pts, RansacConfig(seed=0))
        assert m.slope == pytest.approx(164.47, rel=0.01)
        assert m.intercept == pytest.approx(135.23, rel=0.01)
        assert not set(m.inliers) & set(np.flatnonzero(out).tolist())
