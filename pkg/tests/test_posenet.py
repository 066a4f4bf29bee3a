"""Residual pose prediction, image warping, and photometric supervision."""

import numpy as np
import pytest

import oracles
from sweepdepth import data, posenet
from sweepdepth import geometry as geo
from sweepdepth.grad import Tensor, loss_gradient_check, ops


def planar_sample(seed=0, size=32, depth=2.0):
    return data.generate_planar_scene(data.SceneSpec(
        width=size, height=size, seed=seed, plane_depths=(depth,),
        baseline=0.12))


class TestWarpImage:
    def test_identity_pose_reproduces_source(self):
        sample = planar_sample(seed=1)
        out, mask = posenet.warp_image(sample.src_images[0], sample.gt_depth,
                                       sample.intrinsics,
                                       geo.PoseSE3.identity())
        assert mask.all()
        np.testing.assert_allclose(out.data, sample.src_images[0], atol=1e-6)

    def test_true_pose_and_depth_reconstruct_reference(self):
        sample = planar_sample(seed=2, size=64)
        rel = sample.relative_poses()[0]
        out, mask = posenet.warp_image(sample.src_images[0], sample.gt_depth,
                                       sample.intrinsics, rel)
        err = np.abs(out.data - sample.ref_image)[mask].mean()
        assert err < 2.0 / 255.0

    def test_behind_camera_masked(self):
        sample = planar_sample(seed=3)
        flipped = geo.PoseSE3(geo.axis_angle_to_rotation([0.0, np.pi, 0.0]),
                              np.zeros(3))
        out, mask = posenet.warp_image(sample.src_images[0], sample.gt_depth,
                                       sample.intrinsics, flipped)
        assert not mask.any()
        np.testing.assert_array_equal(out.data, 0.0)

    def test_invalid_depth_pixels_masked(self):
        sample = planar_sample(seed=4)
        depth = sample.gt_depth.copy()
        depth[5:8, 5:8] = 0.0
        out, mask = posenet.warp_image(sample.src_images[0], depth,
                                       sample.intrinsics,
                                       geo.PoseSE3.identity())
        assert not mask[5:8, 5:8].any()
        np.testing.assert_array_equal(out.data[5:8, 5:8], 0.0)


class TestPoseNetwork:
    def test_zero_init_head_gives_identity(self):
        net = posenet.PoseNetwork(np.random.default_rng(0))
        sample = planar_sample(seed=5)
        warped, _ = posenet.warp_image(sample.src_images[0], sample.gt_depth,
                                       sample.intrinsics,
                                       sample.relative_poses()[0])
        residual = posenet.predict_residual_pose(net, sample.ref_image, warped)
        np.testing.assert_array_equal(residual.axis_angle.data, 0.0)
        np.testing.assert_array_equal(residual.rotation, np.eye(3))

    def test_output_scale_bound(self):
        rng = np.random.default_rng(1)
        net = posenet.PoseNetwork(rng)
        # give the head some weight so the bound is non-trivial
        net.head.weight.data = rng.normal(0, 1, net.head.weight.shape
                                          ).astype(np.float32)
        sample = planar_sample(seed=6)
        warped, _ = posenet.warp_image(sample.src_images[0], sample.gt_depth,
                                       sample.intrinsics,
                                       sample.relative_poses()[0])
        stacked = ops.concat([
            Tensor(sample.ref_image * 2.0 - 1.0),
            ops.add(ops.mul(warped, 2.0), -1.0)], axis=-1)
        x = stacked
        for conv in (net.conv1, net.conv2, net.conv3, net.conv4, net.conv5):
            x = ops.relu(conv(x))
        pooled = np.abs(x.data.mean(axis=(0, 1)))
        residual = posenet.predict_residual_pose(net, sample.ref_image, warped)
        bound = 0.01 * np.abs(net.head.weight.data).max() * 64 \
            * max(pooled.max(), 1.0)
        assert np.linalg.norm(residual.axis_angle.data) <= bound

    def test_axis_angle_gradient_wrt_images(self):
        net = posenet.PoseNetwork(np.random.default_rng(2))
        net.astype(np.float64)
        rng = np.random.default_rng(3)
        net.head.weight.data = rng.normal(0, 0.5, net.head.weight.shape)
        ref = rng.random((16, 16, 3))
        warped_data = rng.random((16, 16, 3))
        warped = Tensor(warped_data, requires_grad=True)

        def build_loss():
            residual = posenet.predict_residual_pose(net, ref, warped)
            return residual.axis_angle.sum()

        err = loss_gradient_check(build_loss, {"warped": warped},
                                  max_elements=24)
        assert err < 1e-4


class TestRodriguesTensor:
    def test_matches_geometry_rodrigues(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            v = rng.standard_normal(3) * 0.8
            got = posenet.rodrigues_tensor(Tensor(v)).data
            np.testing.assert_allclose(got, geo.axis_angle_to_rotation(v),
                                       atol=1e-9)

    def test_exact_identity_at_zero(self):
        got = posenet.rodrigues_tensor(Tensor(np.zeros(3))).data
        np.testing.assert_array_equal(got, np.eye(3))

    def test_nonzero_gradient_at_zero(self):
        v = Tensor(np.zeros(3), requires_grad=True)
        r = posenet.rodrigues_tensor(v)
        proj = np.random.default_rng(5).standard_normal((3, 3))
        ops.sum_(ops.mul(r, proj)).backward()
        assert np.abs(v.grad).max() > 0.1

    def test_gradient_matches_finite_differences(self):
        from sweepdepth.grad import finite_difference_check
        for seed in (6, 7):
            v = np.random.default_rng(seed).standard_normal(3) * 0.5
            err = finite_difference_check(posenet.rodrigues_tensor, [v])
            assert err < 1e-6


class TestSelectDepth:
    def test_inference_always_prediction(self):
        pred = np.full((4, 4), 2.0)
        gt = np.full((4, 4), 3.0)
        out = posenet.select_depth_for_pose(pred, gt, training=False, rng=None)
        assert out is pred

    def test_training_draw_fraction(self):
        rng = np.random.default_rng(8)
        pred = np.zeros((1, 1))
        gt = np.ones((1, 1))
        hits = sum(posenet.select_depth_for_pose(pred, gt, True, rng) is pred
                   for _ in range(10_000))
        assert abs(hits / 10_000 - 0.6) < 0.02

    def test_forced_probability_one(self):
        rng = np.random.default_rng(9)
        pred = np.zeros((2, 2))
        gt = np.ones((2, 2))
        for _ in range(50):
            out = posenet.select_depth_for_pose(pred, gt, True, rng,
                                                prob_pred=1.0)
            assert out is pred

    def test_training_without_gt_rejected(self):
        with pytest.raises(ValueError):
            posenet.select_depth_for_pose(np.ones((2, 2)), None, True,
                                          np.random.default_rng(0))

    def test_same_seed_same_draws(self):
        pred = np.zeros((1, 1))
        gt = np.ones((1, 1))
        a = [posenet.select_depth_for_pose(pred, gt, True,
                                           np.random.default_rng(42)) is pred]
        b = [posenet.select_depth_for_pose(pred, gt, True,
                                           np.random.default_rng(42)) is pred]
        assert a == b


class TestPhotometricLoss:
    def test_identical_images_zero(self):
        img = np.random.default_rng(10).random((16, 16, 3)).astype(np.float32)
        loss = posenet.photometric_loss(img, Tensor(img.copy()),
                                        np.ones((16, 16), dtype=bool))
        assert float(loss.data) == pytest.approx(0.0, abs=1e-7)

    def test_constant_offset_l1_floor(self):
        img = np.random.default_rng(11).random((16, 16, 3)) \
            .astype(np.float32) * 0.8
        shifted = Tensor(img + 0.1)
        loss = posenet.photometric_loss(img, shifted,
                                        np.ones((16, 16), dtype=bool))
        assert float(loss.data) >= 0.15 * 0.1 - 1e-6

    def test_bounded(self):
        rng = np.random.default_rng(12)
        a = rng.random((12, 12, 3)).astype(np.float32)
        b = Tensor(rng.random((12, 12, 3)).astype(np.float32))
        loss = posenet.photometric_loss(a, b, np.ones((12, 12), dtype=bool))
        assert 0.0 <= float(loss.data) <= 0.85 + 0.15 * 1.0

    def test_empty_mask_warns_and_returns_zero(self):
        img = np.random.default_rng(13).random((8, 8, 3)).astype(np.float32)
        with pytest.warns(UserWarning):
            loss = posenet.photometric_loss(img, Tensor(img),
                                            np.zeros((8, 8), dtype=bool))
        assert float(loss.data) == 0.0

    def test_gradient(self):
        rng = np.random.default_rng(14)
        ref = rng.random((8, 8, 3))
        mask = np.ones((8, 8), dtype=bool)
        from sweepdepth.grad import finite_difference_check
        err = finite_difference_check(
            lambda w: posenet.photometric_loss(ref, w, mask),
            [rng.random((8, 8, 3))])
        assert err < 1e-4


class TestPoseOracle:
    def test_true_pose_beats_noisy_pose(self):
        sample = planar_sample(seed=15, size=64)
        rel = sample.relative_poses()[0]
        noisy = geo.inject_pose_noise(rel, np.deg2rad(0.5), seed=7)
        mask_all = np.ones((64, 64), dtype=bool)

        def loss_at(pose):
            warped, mask = posenet.warp_image(sample.src_images[0],
                                              sample.gt_depth,
                                              sample.intrinsics, pose)
            return float(posenet.photometric_loss(sample.ref_image, warped,
                                                  mask).data)

        assert loss_at(rel) < loss_at(noisy)

    def test_rectified_loss_reduces_with_true_correction(self):
        sample = planar_sample(seed=16, size=64)
        rel = sample.relative_poses()[0]
        noisy = geo.inject_pose_noise(rel, np.deg2rad(1.0), seed=8)
        correction = rel.compose(noisy.inverse())
        aa = geo.rotation_to_axis_angle(correction.rotation)

        def rect_loss(axis_angle):
            residual = posenet.ResidualPose(
                axis_angle=Tensor(np.asarray(axis_angle, dtype=np.float32)),
                rotation=geo.axis_angle_to_rotation(axis_angle),
                translation=np.zeros(3))
            return float(posenet.rectified_photometric_loss(
                sample.ref_image, sample.src_images[0], sample.gt_depth,
                sample.intrinsics, noisy, residual).data)

        # translation differs slightly after rotation-only correction, but
        # the corrected warp must still beat the identity residual clearly
        assert rect_loss(aa) < rect_loss(np.zeros(3))
