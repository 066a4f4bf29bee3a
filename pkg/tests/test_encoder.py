"""Feature extraction, fusion, attention asymmetry, and context network."""

import numpy as np
import pytest

from sweepdepth import encoder as enc
from sweepdepth.grad import Tensor, loss_gradient_check, ops


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def small_image(seed=0, size=64):
    return np.random.default_rng(seed).random((size, size, 3)).astype(np.float32)


class TestFeatureEncoder:
    def test_scale_and_channel_spec(self, rng):
        net = enc.FeatureEncoder(rng)
        ms = net(enc.normalize_image(small_image()))
        shapes = {s: ms.by_scale[s].shape for s in (2, 4, 8, 16)}
        assert shapes == {2: (32, 32, 32), 4: (16, 16, 32),
                          8: (8, 8, 32), 16: (4, 4, 32)}

    def test_siamese_weight_sharing(self, rng):
        net = enc.FeatureEncoder(rng).eval()
        img = enc.normalize_image(small_image(1))
        a = net(img)
        b = net(img)
        for s in (2, 4, 8, 16):
            np.testing.assert_array_equal(a.by_scale[s].data, b.by_scale[s].data)

    def test_finite_output(self, rng):
        net = enc.FeatureEncoder(rng)
        ms = net(enc.normalize_image(small_image(2)))
        for t in ms.by_scale.values():
            assert np.isfinite(t.data).all()

    def test_indivisible_size_rejected(self, rng):
        net = enc.FeatureEncoder(rng)
        with pytest.raises(ValueError):
            net(Tensor(np.zeros((60, 64, 3), dtype=np.float32)))


class TestFusionLayer:
    def test_output_shape(self, rng):
        fnet = enc.FeatureEncoder(rng)
        fuse = enc.FusionLayer(rng)
        out = fuse(fnet(enc.normalize_image(small_image(3))))
        assert out.shape == (16, 16, 128)

    def test_zero_features_zero_output(self, rng):
        fuse = enc.FusionLayer(rng)
        zeros = enc.MultiScaleFeatures(by_scale={
            2: Tensor(np.zeros((8, 8, 32), dtype=np.float32)),
            4: Tensor(np.zeros((4, 4, 32), dtype=np.float32)),
            8: Tensor(np.zeros((2, 2, 32), dtype=np.float32)),
            16: Tensor(np.zeros((1, 1, 32), dtype=np.float32)),
        })
        out = fuse(zeros)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_missing_scale_rejected(self):
        with pytest.raises(ValueError):
            enc.MultiScaleFeatures(by_scale={2: Tensor(np.zeros((4, 4, 32)))})

    def test_gradients_through_fusion_path(self, rng):
        fuse = enc.FusionLayer(rng).astype(np.float64)
        maps = {s: np.random.default_rng(s).standard_normal(
            (16 // s, 16 // s, 32)) for s in (2, 4, 8, 16)}
        tensors = {f"f{s}": Tensor(maps[s], requires_grad=True)
                   for s in (2, 4, 8, 16)}
        tensors["w0"] = fuse.conv0.weight
        tensors["gamma"] = fuse.bn.gamma

        def build_loss():
            ms = enc.MultiScaleFeatures(
                by_scale={s: tensors[f"f{s}"] for s in (2, 4, 8, 16)})
            return fuse(ms).sum()

        err = loss_gradient_check(build_loss, tensors, max_elements=24)
        assert err < 1e-4


class TestAttention:
    def test_zero_gate_is_identity(self, rng):
        att = enc.AttentionAggregator(rng)
        feat = Tensor(np.random.default_rng(9).standard_normal(
            (6, 5, 128)).astype(np.float32))
        out = att(feat)
        np.testing.assert_array_equal(out.data, feat.data)

    def test_rows_sum_to_one(self, rng):
        att = enc.AttentionAggregator(rng)
        feat = Tensor(np.random.default_rng(10).standard_normal(
            (4, 4, 128)).astype(np.float32))
        q = ops.matmul(ops.add(feat, enc.sinusoidal_position_encoding(
            4, 4, 128)).reshape((16, 128)), att.w_query)
        k = ops.matmul(ops.add(feat, enc.sinusoidal_position_encoding(
            4, 4, 128)).reshape((16, 128)), att.w_key)
        qh = q.reshape((16, 4, 128)).transpose((1, 0, 2))
        kh = k.reshape((16, 4, 128)).transpose((1, 0, 2))
        rows = ops.softmax_lastdim(
            ops.mul(ops.matmul(qh, kh.transpose((0, 2, 1))),
                    1 / np.sqrt(128)))
        np.testing.assert_allclose(rows.data.sum(-1), 1.0, atol=1e-6)

    def test_single_position_closed_form(self, rng):
        att = enc.AttentionAggregator(rng)
        att.gate.data = np.array(0.37, dtype=np.float32)
        feat = Tensor(np.random.default_rng(11).standard_normal(
            (1, 1, 128)).astype(np.float32))
        out = att(feat)
        expect = feat.data + 0.37 * (feat.data.reshape(1, 128)
                                     @ att.w_value.data).reshape(1, 1, 128)
        np.testing.assert_allclose(out.data, expect, atol=1e-5)

    def test_gradients(self, rng):
        att = enc.AttentionAggregator(rng).astype(np.float64)
        att.gate.data = np.array(0.5)
        x = np.random.default_rng(12).standard_normal((3, 3, 128)) * 0.2
        feat = Tensor(x, requires_grad=True)
        tensors = {"feat": feat, "wq": att.w_query, "wv": att.w_value,
                   "gate": att.gate}
        err = loss_gradient_check(lambda: att(feat).sum(), tensors,
                                  max_elements=16)
        assert err < 1e-4


class TestContextEncoder:
    def test_levels_and_shapes(self, rng):
        net = enc.ContextEncoder(rng)
        ctx = net(enc.normalize_image(small_image(4)))
        assert ctx.context[4].shape == (16, 16, 64)
        assert ctx.context[8].shape == (8, 8, 64)
        assert ctx.context[16].shape == (4, 4, 64)
        assert set(ctx.hidden_init) == {4, 8, 16}

    def test_hidden_init_in_tanh_range(self, rng):
        net = enc.ContextEncoder(rng)
        ctx = net(enc.normalize_image(small_image(5)))
        for t in ctx.hidden_init.values():
            assert (t.data > -1).all() and (t.data < 1).all()

    def test_context_nonnegative(self, rng):
        net = enc.ContextEncoder(rng)
        ctx = net(enc.normalize_image(small_image(6)))
        for t in ctx.context.values():
            assert (t.data >= 0).all()


class TestPositionEncoding:
    def test_shape_and_range(self):
        pe = enc.sinusoidal_position_encoding(5, 7, 128)
        assert pe.shape == (5, 7, 128)
        assert np.abs(pe).max() <= 1.0

    def test_distinct_positions_distinct_codes(self):
        pe = enc.sinusoidal_position_encoding(8, 8, 128)
        flat = pe.reshape(64, 128)
        dists = np.linalg.norm(flat[None] - flat[:, None], axis=-1)
        np.fill_diagonal(dists, np.inf)
        assert dists.min() > 1e-3

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ValueError):
            enc.sinusoidal_position_encoding(4, 4, 130)
