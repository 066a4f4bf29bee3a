"""Synthetic scene generation and file I/O contracts."""

import numpy as np
import pytest

from sweepdepth import data
from sweepdepth import geometry as geo
from sweepdepth.grad import Tensor, ops


class TestPlanarScene:
    def test_frontoparallel_plane_depth_is_constant(self):
        s = data.generate_planar_scene(data.SceneSpec(plane_depths=(2.0,)))
        np.testing.assert_allclose(s.gt_depth, 2.0, atol=1e-6)

    def test_cross_view_render_consistency(self):
        s = data.generate_planar_scene(data.SceneSpec(seed=3))
        rel = s.relative_poses()[0]
        grid = geo.warp_grid(s.intrinsics, s.intrinsics, rel,
                             s.gt_depth.astype(np.float64))
        warped, mask = ops.grid_sample_bilinear(
            Tensor(s.src_images[0]), grid.astype(np.float32))
        err = np.abs(warped.data - s.ref_image)[mask].mean()
        assert err < 2.0 / 255.0
        assert mask.mean() > 0.5

    def test_epipolar_contract_every_view(self):
        s = data.generate_planar_scene(data.SceneSpec(seed=8, n_views=3))
        for k, rel in enumerate(s.relative_poses()):
            grid = geo.warp_grid(s.intrinsics, s.intrinsics, rel,
                                 s.gt_depth.astype(np.float64))
            warped, mask = ops.grid_sample_bilinear(
                Tensor(s.src_images[k]), grid.astype(np.float32))
            err = np.abs(warped.data - s.ref_image)[mask].mean()
            assert err < 2.0 / 255.0, f"source view {k}"

    def test_same_seed_identical(self):
        a = data.generate_planar_scene(data.SceneSpec(seed=5))
        b = data.generate_planar_scene(data.SceneSpec(seed=5))
        np.testing.assert_array_equal(a.ref_image, b.ref_image)
        np.testing.assert_array_equal(a.gt_depth, b.gt_depth)
        for x, y in zip(a.src_images, b.src_images):
            np.testing.assert_array_equal(x, y)

    def test_two_planes_make_an_occlusion_edge(self):
        s = data.generate_planar_scene(data.SceneSpec(
            seed=2, plane_depths=(3.0, 1.5), near_plane_extent=0.2))
        depths = np.unique(np.round(s.gt_depth, 4))
        assert set(depths.tolist()) == {1.5, 3.0}

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            data.generate_planar_scene(data.SceneSpec(width=30))
        with pytest.raises(ValueError):
            data.generate_planar_scene(data.SceneSpec(plane_depths=(25.0,)))
        with pytest.raises(ValueError):
            data.generate_planar_scene(data.SceneSpec(plane_depths=(0.1,)))
        with pytest.raises(ValueError):
            data.generate_planar_scene(data.SceneSpec(n_views=1))

    def test_images_in_unit_range(self):
        s = data.generate_planar_scene(data.SceneSpec(seed=1))
        assert s.ref_image.min() >= 0.0 and s.ref_image.max() <= 1.0


class TestPfm:
    def test_round_trip_bit_identical(self, tmp_path):
        arr = np.random.default_rng(0).standard_normal((17, 23)).astype(np.float32)
        path = tmp_path / "map.pfm"
        data.write_pfm(path, arr)
        back = data.read_pfm(path)
        assert back.dtype == np.float32
        np.testing.assert_array_equal(back, arr)

    def test_header_validation(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
        with pytest.raises(ValueError):
            data.read_pfm(path)
        path.write_bytes(b"Pf\n2 2\n1.0\n" + b"\x00" * 16)
        with pytest.raises(ValueError):
            data.read_pfm(path)
        path.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 8)
        with pytest.raises(ValueError):
            data.read_pfm(path)


class TestDepthPng:
    def test_millimeter_quantization_round_half_even(self, tmp_path):
        path = tmp_path / "d.png"
        data.write_depth_png(path, np.array([[1.2345, 1.2335]]))
        back = data.read_depth_png(path)
        # 1234.5 -> 1234 and 1233.5 -> 1234 under round-half-even
        np.testing.assert_allclose(back * 1000.0, [[1234.0, 1234.0]])

    def test_zero_is_invalid_sentinel(self, tmp_path):
        path = tmp_path / "d.png"
        data.write_depth_png(path, np.array([[0.0, 2.5]]))
        back = data.read_depth_png(path)
        assert back[0, 0] == 0.0
        assert back[0, 1] == pytest.approx(2.5, abs=1e-3)

    def test_round_trip_within_half_mm(self, tmp_path):
        depth = np.random.default_rng(1).uniform(0.3, 19.0, (8, 8))
        path = tmp_path / "d.png"
        data.write_depth_png(path, depth)
        back = data.read_depth_png(path)
        assert np.abs(back - depth).max() <= 0.0005 + 1e-9


class TestImagePng:
    def test_round_trip_8bit(self, tmp_path):
        img = np.random.default_rng(2).random((12, 10, 3)).astype(np.float32)
        path = tmp_path / "img.png"
        data.write_image_png(path, img)
        back = data.read_image_png(path)
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-6


def _write_sequence(tmp_path, n_frames=50):
    k = geo.CameraIntrinsics(76.8, 76.8, 32.0, 32.0, 64, 64)
    frames = []
    rng = np.random.default_rng(4)
    for i in range(n_frames):
        image = rng.random((64, 64, 3)).astype(np.float32)
        depth = np.full((64, 64), 2.0 + 0.01 * i, dtype=np.float32)
        pose = geo.PoseSE3(np.eye(3), np.array([0.02 * i, 0.0, 0.0]))
        frames.append((image, depth, pose))
    data.write_scene_directory(tmp_path / "scene", frames, k)
    return tmp_path / "scene"


class TestSceneDirectory:
    def test_stride_10_three_views_centers(self, tmp_path):
        scene = _write_sequence(tmp_path, 50)
        samples = data.load_scene_directory(scene, sample_stride=10, n_views=3)
        names = [s.name for s in samples]
        assert names == [f"scene-{i:06d}" for i in (10, 20, 30)]
        # neighbors at +/- 10: check through the translation of the poses
        s = samples[0]
        assert s.poses_c2w[0].translation[0] == pytest.approx(0.2)
        srcs = sorted(p.translation[0] for p in s.poses_c2w[1:])
        assert srcs == pytest.approx([0.0, 0.4])

    def test_five_views_has_four_sources(self, tmp_path):
        scene = _write_sequence(tmp_path, 50)
        samples = data.load_scene_directory(scene, sample_stride=10, n_views=5)
        assert len(samples) == 1
        assert len(samples[0].src_images) == 4

    def test_empty_directory_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            data.load_scene_directory(tmp_path / "nothing")

    def test_loader_deterministic(self, tmp_path):
        scene = _write_sequence(tmp_path, 30)
        a = data.load_scene_directory(scene)
        b = data.load_scene_directory(scene)
        assert [s.name for s in a] == [s.name for s in b]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.ref_image, y.ref_image)
            np.testing.assert_array_equal(x.gt_depth, y.gt_depth)

    def test_zero_depth_loads_as_invalid(self, tmp_path):
        scene = _write_sequence(tmp_path, 30)
        # punch an invalid hole into frame 10's depth
        depth = data.read_depth_png(scene / "depth" / "000010.png")
        depth[3, 4] = 0.0
        data.write_depth_png(scene / "depth" / "000010.png", depth)
        samples = data.load_scene_directory(scene)
        assert samples[0].gt_depth[3, 4] == 0.0
