"""Camera, pose, and depth-bin contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepdepth import geometry as geo


class TestDepthBins:
    def test_endpoints(self):
        bins = geo.make_depth_bins(0.25, 20.0, 64)
        assert bins.values[0] == pytest.approx(20.0)
        assert bins.values[63] == pytest.approx(0.25)

    def test_second_bin_closed_form(self):
        bins = geo.make_depth_bins(0.25, 20.0, 64)
        expect = 1.0 / (0.05 + 3.95 / 63)
        assert bins.values[1] == pytest.approx(expect, abs=1e-9)
        assert bins.values[1] == pytest.approx(8.8732, abs=1e-4)

    def test_monotone_decreasing(self):
        bins = geo.make_depth_bins(0.5, 10.0, 32)
        assert (np.diff(bins.values) < 0).all()

    def test_reciprocals_affine_in_index(self):
        bins = geo.make_depth_bins(0.25, 20.0, 64)
        inv = 1.0 / bins.values
        i = np.arange(64)
        coeffs = np.polyfit(i, inv, 1)
        residual = np.abs(np.polyval(coeffs, i) - inv).max()
        assert residual < 1e-9

    def test_degenerate_range_rejected(self):
        with pytest.raises(ValueError):
            geo.make_depth_bins(1.0, 1.0, 16)
        with pytest.raises(ValueError):
            geo.make_depth_bins(-1.0, 2.0, 16)
        with pytest.raises(ValueError):
            geo.make_depth_bins(0.5, 2.0, 1)

    def test_interp_linear_between_bins(self):
        bins = geo.make_depth_bins(1.0, 4.0, 4)
        mid = bins.interp(np.array([0.5]))
        assert mid[0] == pytest.approx((bins.values[0] + bins.values[1]) / 2)


class TestWarpGrid:
    def test_identity_pose_is_identity_map(self):
        k = geo.CameraIntrinsics(50, 50, 16, 12, 32, 24)
        for depth in (0.5, 2.0, 10.0):
            grid = geo.warp_grid(k, k, geo.PoseSE3.identity(), depth)
            expect = geo.pixel_grid(24, 32)[..., :2]
            np.testing.assert_allclose(grid, expect, atol=1e-9)

    def test_hand_computed_translation(self):
        k = geo.CameraIntrinsics(100, 100, 50, 50, 101, 101)
        pose = geo.PoseSE3(np.eye(3), np.array([0.1, 0.0, 0.0]))
        grid = geo.warp_grid(k, k, pose, 2.0)
        np.testing.assert_allclose(grid[50, 50], [55.0, 50.0], atol=1e-9)

    def test_behind_camera_flagged_out_of_bounds(self):
        k = geo.CameraIntrinsics(40, 40, 8, 8, 16, 16)
        # rotate 180 degrees about y: everything lands behind the camera
        pose = geo.PoseSE3(geo.axis_angle_to_rotation([0, np.pi, 0]),
                           np.zeros(3))
        grid = geo.warp_grid(k, k, pose, 1.0)
        assert (grid < -1e5).all()

    def test_nonpositive_depth_rejected(self):
        k = geo.CameraIntrinsics(40, 40, 8, 8, 16, 16)
        with pytest.raises(ValueError):
            geo.warp_grid(k, k, geo.PoseSE3.identity(), 0.0)

    def test_per_pixel_depth_map(self):
        k = geo.CameraIntrinsics(30, 30, 8, 8, 16, 16)
        pose = geo.PoseSE3(np.eye(3), np.array([0.3, 0.0, 0.0]))
        depth = np.full((16, 16), 3.0)
        grid_map = geo.warp_grid(k, k, pose, depth)
        grid_scalar = geo.warp_grid(k, k, pose, 3.0)
        np.testing.assert_allclose(grid_map, grid_scalar)


class TestRotations:
    def test_zero_vector_gives_identity(self):
        np.testing.assert_array_equal(geo.axis_angle_to_rotation([0, 0, 0]),
                                      np.eye(3))

    def test_quarter_turn_about_x(self):
        r = geo.axis_angle_to_rotation([np.pi / 2, 0, 0])
        expect = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
        np.testing.assert_allclose(r, expect, atol=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_axis_angle_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(3)
        v = v / np.linalg.norm(v) * rng.uniform(1e-4, np.pi - 1e-3)
        r = geo.axis_angle_to_rotation(v)
        back = geo.rotation_to_axis_angle(r)
        np.testing.assert_allclose(back, v, atol=1e-6)

    def test_orthonormal_after_many_compositions(self):
        rng = np.random.default_rng(7)
        pose = geo.PoseSE3.identity()
        for _ in range(100):
            v = rng.standard_normal(3) * 0.3
            step = geo.PoseSE3(geo.axis_angle_to_rotation(v),
                               rng.standard_normal(3))
            pose = step.compose(pose)
        r = pose.rotation
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-6


class TestRectifyPose:
    def _random_pose(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(3) * 0.4
        return geo.PoseSE3(geo.axis_angle_to_rotation(v), rng.standard_normal(3))

    def test_identity_delta_is_noop(self):
        pose = self._random_pose(1)
        out = geo.rectify_pose(geo.PoseSE3.identity(), pose)
        assert out.allclose(pose, atol=1e-15)

    def test_exact_recovery_of_true_pose(self):
        true = self._random_pose(2)
        noisy = geo.inject_pose_noise(true, 0.02, seed=3)
        delta = true.compose(noisy.inverse())
        restored = geo.rectify_pose(delta, noisy)
        assert restored.allclose(true, atol=1e-9)

    def test_rectification_inverse_restores(self):
        pose = self._random_pose(4)
        delta = self._random_pose(5)
        there = geo.rectify_pose(delta, pose)
        back = geo.rectify_pose(delta.inverse(), there)
        assert back.allclose(pose, atol=1e-9)

    def test_successive_rectifications_associative(self):
        pose = self._random_pose(6)
        d1 = self._random_pose(7)
        d2 = self._random_pose(8)
        a = geo.rectify_pose(d2, geo.rectify_pose(d1, pose))
        b = geo.rectify_pose(d2.compose(d1), pose)
        assert a.allclose(b, atol=1e-12)


class TestPoseNoise:
    def test_zero_sigma_unchanged(self):
        pose = geo.PoseSE3.identity()
        out = geo.inject_pose_noise(pose, 0.0, seed=1)
        assert out is pose

    def test_geodesic_angle_equals_drawn_angle(self):
        pose = geo.PoseSE3(geo.axis_angle_to_rotation([0.1, 0.2, -0.1]),
                           np.array([1.0, 0.0, 0.5]))
        sigma, seed = 0.05, 123
        noisy = geo.inject_pose_noise(pose, sigma, seed=seed)
        drawn = abs(np.random.default_rng(seed).normal(0.0, sigma))
        measured = geo.geodesic_angle(noisy.rotation, pose.rotation)
        assert measured == pytest.approx(drawn, abs=1e-6)

    def test_same_seed_identical(self):
        pose = geo.PoseSE3.identity()
        a = geo.inject_pose_noise(pose, 0.01, seed=9)
        b = geo.inject_pose_noise(pose, 0.01, seed=9)
        np.testing.assert_array_equal(a.rotation, b.rotation)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            geo.inject_pose_noise(geo.PoseSE3.identity(), -0.1, seed=0)


class TestFileFormats:
    def test_pose_round_trip(self, tmp_path):
        pose = geo.PoseSE3(geo.axis_angle_to_rotation([0.2, -0.1, 0.3]),
                           np.array([1.5, -2.0, 0.25]))
        path = tmp_path / "pose.txt"
        geo.save_pose_file(path, pose)
        back = geo.load_pose_file(path)
        assert back.allclose(pose, atol=1e-9)

    def test_pose_file_wrong_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2 3\n")
        with pytest.raises(ValueError):
            geo.load_pose_file(path)

    def test_intrinsics_round_trip(self, tmp_path):
        k = geo.CameraIntrinsics(76.8, 76.8, 32.0, 24.0, 64, 48)
        path = tmp_path / "intrinsics.txt"
        geo.save_intrinsics_file(path, k)
        back = geo.load_intrinsics_file(path)
        assert back == k

    def test_intrinsics_scaling_divides_all_four(self):
        k = geo.CameraIntrinsics(100.0, 90.0, 32.0, 24.0, 64, 48)
        q = k.scaled(4)
        assert (q.fx, q.fy, q.cx, q.cy) == (25.0, 22.5, 8.0, 6.0)
        assert (q.width, q.height) == (16, 12)

    def test_relative_pose_definition(self):
        ref = geo.PoseSE3(geo.axis_angle_to_rotation([0.1, 0, 0]),
                          np.array([0.0, 0.0, 0.0]))
        src = geo.PoseSE3(geo.axis_angle_to_rotation([0, 0.2, 0]),
                          np.array([0.5, 0.0, 0.0]))
        rel = geo.relative_pose(ref, src)
        # a point at the reference origin must land at src^{-1} * ref origin
        p_world = ref.rotation @ np.zeros(3) + ref.translation
        expect = src.rotation.T @ (p_world - src.translation)
        np.testing.assert_allclose(rel.rotation @ np.zeros(3) + rel.translation,
                                   expect, atol=1e-12)
