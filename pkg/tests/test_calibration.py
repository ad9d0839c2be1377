import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from childpose import _kernels
from childpose.calibration import (FocalSample, HeightFocalPoint, LinearModel, PersonProfile, RansacConfig,
                                   candidate_pairs, focal_sample_from_window, height_focal_point,
                                   load_model, model_to_json, personalize, predict_focal, ransac_fit,
                                   save_model, weight_from_depth, weighted_least_squares, weighted_loss,
                                   weighted_r2)
from childpose.errors import InvalidInputError, NoModelError, UnderdeterminedError
from childpose.geometry import BoundingBox, WeakPerspectiveCam
from childpose.records import Detection

from oracles import ransac_exhaustive, wls_line

TABLE_I = LinearModel(164.47, 135.23)


def det(s, size=200.0):
    return Detection(bbox=BoundingBox(0, size, 0, size / 2), wp=WeakPerspectiveCam(s))


class TestFocalSample:
    def test_constant_window(self):
        sample = focal_sample_from_window([det(1.0)] * 10, 4.0, 2.0)
        assert sample.measured_f == pytest.approx(400.0, rel=1e-15)

    def test_median_rejects_glitch(self):
        # f = d s alpha / mu: s=1 gives 400, s=10 gives 4000
        frames = [det(1.0)] * 9 + [det(10.0)]
        assert focal_sample_from_window(frames, 4.0).measured_f == pytest.approx(400.0, rel=1e-15)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            focal_sample_from_window([], 2.2)

    def test_unusable_frames_skipped(self):
        frames = [Detection(bbox=BoundingBox(0, 200, 0, 100)), det(1.0)]
        assert focal_sample_from_window(frames, 4.0).measured_f == pytest.approx(400.0)
        with pytest.raises(InvalidInputError):
            focal_sample_from_window([Detection()], 4.0)

    def test_point_from_sample(self):
        p = height_focal_point(FocalSample("T1", 2.0, 410.0, (3, 9)), 1.7)
        assert (p.height, p.f, p.weight) == (1.7, 410.0, 1 / 16)


class TestWeights:
    @pytest.mark.parametrize("Z,w", [(1.0, 1.0), (2.0, 1 / 16)])
    def test_values(self, Z, w):
        assert weight_from_depth(Z) == w

    @given(st.floats(0.1, 100))
    def test_scaling_law(self, Z):
        assert weight_from_depth(2 * Z) / weight_from_depth(Z) == pytest.approx(1 / 16, rel=1e-12)

    @pytest.mark.parametrize("Z", [0.0, -2.0])
    def test_rejects(self, Z):
        with pytest.raises(InvalidInputError):
            weight_from_depth(Z)


class TestLossAndR2:
    def test_perfect_fit(self):
        pts = [HeightFocalPoint(h, 160 * h + 140, 1.0) for h in (1.0, 1.5, 2.0)]
        model = LinearModel(160, 140)
        assert weighted_loss(pts, model) == pytest.approx(0.0, abs=1e-20)
        assert weighted_r2(pts, model) == 1.0

    def test_two_point_hand_value(self):
        model = LinearModel(0.0, 400.0)
        pts = [HeightFocalPoint(1.0, 410.0, 1.0), HeightFocalPoint(2.0, 390.0, 1.0)]
        assert weighted_loss(pts, model) == 100.0

    @given(st.floats(1e-3, 1e3))
    def test_weight_scaling_invariance(self, c):
        model = LinearModel(150.0, 150.0)
        pts = [HeightFocalPoint(1.2, 330.0, 0.3), HeightFocalPoint(1.6, 400.0, 1.0), HeightFocalPoint(1.8, 430.0, 0.05)]
        scaled = [HeightFocalPoint(p.height, p.f, p.weight * c) for p in pts]
        assert weighted_loss(scaled, model) == pytest.approx(weighted_loss(pts, model), rel=1e-12)

    def test_empty_loss(self):
        with pytest.raises(InvalidInputError):
            weighted_loss([], TABLE_I)

    def test_mean_model_gives_zero(self):
        pts = [HeightFocalPoint(1.0, 300.0, 1.0), HeightFocalPoint(1.5, 380.0, 3.0), HeightFocalPoint(2.0, 420.0, 0.5)]
        fbar = (300 + 380 * 3 + 420 * 0.5) / 4.5
        assert weighted_r2(pts, LinearModel(0.0, fbar)) == pytest.approx(0.0, abs=1e-12)

    def test_zero_weight_point_ignored(self):
        pts = [HeightFocalPoint(h, 160 * h + 140, 1.0) for h in (1.0, 1.5, 2.0)]
        pts.append(HeightFocalPoint(1.2, 999.0, 0.0))
        assert weighted_r2(pts, LinearModel(160, 140)) == 1.0

    def test_zero_variance(self):
        pts = [HeightFocalPoint(1.0, 400.0), HeightFocalPoint(2.0, 400.0)]
        with pytest.raises(InvalidInputError):
            weighted_r2(pts, LinearModel(0, 400))


class TestRansac:
    def test_recovers_line_with_outlier(self):
        pts = [HeightFocalPoint(h, 160 * h + 140, weight_from_depth(z))
               for h, z in [(1.5, 2.2), (1.6, 2.2), (1.7, 2.5), (1.8, 3.1), (1.9, 2.2)]]
        pts.insert(2, HeightFocalPoint(1.65, 900.0, weight_from_depth(2.2)))
        m = ransac_fit(pts, RansacConfig(inlier_threshold=5))
        assert abs(m.slope - 160) <= 1e-9 and abs(m.intercept - 140) <= 1e-9
        assert m.inliers == (0, 1, 3, 4, 5)
        assert m.r2 == pytest.approx(1.0, abs=1e-12)

    def test_two_points(self):
        m = ransac_fit([HeightFocalPoint(1.5, 380.0), HeightFocalPoint(1.8, 430.0)])
        assert m.slope == pytest.approx(50 / 0.3) and m.r2 == pytest.approx(1.0)
        assert m.inliers == (0, 1)

    def test_collinear_all_inliers(self):
        pts = [HeightFocalPoint(h, 100 * h + 200, 1.0 / (1 + h)) for h in np.linspace(0.9, 2.0, 9)]
        m = ransac_fit(pts)
        assert m.inliers == tuple(range(9)) and m.r2 == pytest.approx(1.0, abs=1e-12)

    def test_underdetermined(self):
        with pytest.raises(UnderdeterminedError):
            ransac_fit([HeightFocalPoint(1.5, 380.0), HeightFocalPoint(1.5, 390.0)])
        with pytest.raises(UnderdeterminedError):
            ransac_fit([HeightFocalPoint(1.5, 380.0)])

    def test_no_consensus(self):
        pts = [HeightFocalPoint(1.0, 300.0), HeightFocalPoint(2.0, 500.0), HeightFocalPoint(3.0, 300.0)]
        with pytest.raises(NoModelError):
            ransac_fit(pts, RansacConfig(inlier_threshold=1.0, min_points=3))

    def test_matches_exhaustive_oracle(self, rng, kernel_backend):
        for _ in range(40):
            n = int(rng.integers(3, 12))
            h = rng.uniform(0.9, 2.0, n)
            z = rng.choice([1.3, 2.2, 2.5, 3.1], n)
            f = 164.47 * h + 135.23 + rng.normal(0, 3, n)
            bad = rng.random(n) < 0.25
            f[bad] += rng.uniform(-150, 150, bad.sum())
            f = np.abs(f) + 1
            pts = [HeightFocalPoint(a, b, c ** -4) for a, b, c in zip(h, f, z)]
            m = ransac_fit(pts, RansacConfig(inlier_threshold=10))
            (slope, icpt), inl = ransac_exhaustive([(p.height, p.f, p.weight) for p in pts], 10)
            assert m.inliers == inl
            assert m.slope == pytest.approx(slope, rel=1e-9) and m.intercept == pytest.approx(icpt, rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("n", [3, 5, 8])
    def test_sampling_equals_enumeration(self, rng, n):
        h = rng.uniform(0.9, 2.0, n)
        f = 150 * h + 150 + rng.normal(0, 4, n)
        f[0] += 120
        pts = [HeightFocalPoint(a, b, 1.0) for a, b in zip(h, f)]
        exhaustive = ransac_fit(pts, RansacConfig(inlier_threshold=8))
        sampled = ransac_fit(pts, RansacConfig(inlier_threshold=8, max_iterations=n * (n - 1) // 2, seed=99,
                                               exhaustive_max_points=0))
        assert sampled == exhaustive

    def test_clean_data_equals_wls(self, rng):
        h = rng.uniform(0.9, 2.0, 7)
        z = rng.uniform(1.3, 3.0, 7)
        pts = [HeightFocalPoint(a, 164.47 * a + 135.23, c ** -4) for a, c in zip(h, z)]
        m = ransac_fit(pts)
        full = weighted_least_squares(pts)
        oracle = wls_line([(p.height, p.f, p.weight) for p in pts])
        assert m.inliers == full.inliers
        assert m.slope == pytest.approx(full.slope, rel=1e-12) and m.slope == pytest.approx(oracle[0], rel=1e-12)
        assert m.intercept == pytest.approx(oracle[1], rel=1e-12)

    def test_deterministic(self, rng):
        h = rng.uniform(0.9, 2.0, 60)
        pts = [HeightFocalPoint(a, 160 * a + 140 + b, 1.0) for a, b in zip(h, rng.normal(0, 5, 60))]
        cfg = RansacConfig(max_iterations=200, seed=5)
        assert model_to_json(ransac_fit(pts, cfg), cfg) == model_to_json(ransac_fit(pts, cfg), cfg)

    def test_weight_constant_does_not_matter(self, rng):
        h = rng.uniform(0.9, 2.0, 10)
        z = rng.uniform(1.3, 3.1, 10)
        f = 164.47 * h + 135.23 + rng.normal(0, 2, 10) * z ** 2
        f[3] += 80
        a = ransac_fit([HeightFocalPoint(x, y, c ** -4) for x, y, c in zip(h, f, z)])
        b = ransac_fit([HeightFocalPoint(x, y, 37.5 * c ** -4) for x, y, c in zip(h, f, z)])
        assert a.inliers == b.inliers
        assert a.slope == pytest.approx(b.slope, rel=1e-10)


class TestCandidates:
    def test_exhaustive_order(self):
        ii, jj = candidate_pairs(4, RansacConfig())
        assert list(zip(ii, jj)) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def test_sampled_pairs_distinct_and_valid(self):
        ii, jj = candidate_pairs(50, RansacConfig(max_iterations=300, seed=3))
        pairs = set(zip(ii.tolist(), jj.tolist()))
        assert len(pairs) == 300 and all(0 <= i < j < 50 for i, j in pairs)

    def test_full_coverage_when_budget_allows(self):
        ii, jj = candidate_pairs(20, RansacConfig(max_iterations=10_000))
        assert len(set(zip(ii.tolist(), jj.tolist()))) == 190


def test_kernel_backends_agree(rng):
    h = rng.uniform(0.9, 2.0, 40)
    f = 160 * h + 140 + rng.normal(0, 6, 40)
    w = rng.uniform(0.01, 1, 40)
    ii, jj = candidate_pairs(40, RansacConfig(max_iterations=500, exhaustive_max_points=0))
    keep = h[ii] != h[jj]
    a = _kernels.score_lines_numba(h, f, w, ii[keep], jj[keep], 7.5)
    b = _kernels.score_lines_numpy(h, f, w, ii[keep], jj[keep], 7.5)
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_array_equal(a[0], b[0])


class TestPredict:
    @pytest.mark.parametrize("height,f", [(1.41, 367.13), (1.62, 401.67), (1.75, 423.05)])
    def test_table_values(self, height, f):
        assert abs(predict_focal(TABLE_I, height) - f) <= 0.005

    def test_intercept(self):
        assert TABLE_I.predict(0.0) == 135.23
        with pytest.raises(InvalidInputError):
            predict_focal(TABLE_I, 0.0)

    @given(st.floats(0.1, 3), st.floats(0.1, 3))
    def test_affine(self, h1, h2):
        lhs = predict_focal(TABLE_I, h1) + predict_focal(TABLE_I, h2)
        assert lhs == pytest.approx(predict_focal(TABLE_I, h1 + h2) + TABLE_I.intercept, rel=1e-12)

    def test_personalize(self):
        out = personalize([PersonProfile("C", "child", 1.41), PersonProfile("T", "therapist", 1.75)], TABLE_I)
        assert [round(p.personalized_f, 2) for p in out] == [367.13, 423.05]


def test_model_file_round_trip(tmp_path):
    m = LinearModel(164.47, 135.23, 0.9959, (0, 2, 3))
    save_model(m, tmp_path / "m.json", RansacConfig(seed=11))
    assert load_model(tmp_path / "m.json") == m
    assert '"seed": 11' in (tmp_path / "m.json").read_text()


def test_model_r2_bound():
    with pytest.raises(InvalidInputError):
        LinearModel(1, 1, 1.5)
