"""Matching-feature extraction, multi-scale fusion, asymmetric attention on
the reference view, and the context network feeding the recurrent updater."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .grad import Tensor, ops
from .nn import BatchNorm2d, Conv2d, ConvBnRelu, Module, ResidualBlock, parameter

FEATURE_CHANNELS = 32       # per-scale channels of the pyramid encoder
MATCHING_CHANNELS = 128     # fused matching-feature width
ATTENTION_HEADS = 4
HIDDEN_CHANNELS = 64        # recurrent hidden width per level
CONTEXT_CHANNELS = 64       # per-level context width
SCALES = (2, 4, 8, 16)
GRU_SCALES = (4, 8, 16)


@dataclass
class MultiScaleFeatures:
    """Feature maps at 1/2, 1/4, 1/8, 1/16 scale, equal channel width."""

    by_scale: Dict[int, Tensor]

    def __post_init__(self):
        if set(self.by_scale) != set(SCALES):
            raise ValueError(f"expected scales {SCALES}, got "
                             f"{sorted(self.by_scale)}")
        widths = {t.shape[-1] for t in self.by_scale.values()}
        if len(widths) != 1:
            raise ValueError(f"channel width differs across scales: {widths}")


@dataclass
class ContextFeatures:
    """Per-level context maps and initial hidden states for the updater."""

    context: Dict[int, Tensor]       # relu-activated, injected every step
    hidden_init: Dict[int, Tensor]   # tanh-activated initial hidden states


def normalize_image(image01: np.ndarray) -> Tensor:
    """Map a [0, 1] float image to the [-1, 1] encoder input range."""
    return Tensor(np.asarray(image01, dtype=np.float32) * 2.0 - 1.0)


def _check_divisible(t: Tensor) -> None:
    h, w = t.shape[:2]
    if h % 16 or w % 16:
        raise ValueError(f"image size {h}x{w} must be divisible by 16")


class FeatureEncoder(Module):
    """Strided 6-convolution encoder with a top-down pyramid path.

    Weights are shared across views: the same instance encodes reference
    and source images.
    """

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        f = FEATURE_CHANNELS
        self.enc1 = ConvBnRelu(3, 16, stride=2, rng=rng)     # 1/2
        self.enc2 = ConvBnRelu(16, 16, stride=1, rng=rng)
        self.enc3 = ConvBnRelu(16, 32, stride=2, rng=rng)    # 1/4
        self.enc4 = ConvBnRelu(32, 48, stride=2, rng=rng)    # 1/8
        self.enc5 = ConvBnRelu(48, 64, stride=2, rng=rng)    # 1/16
        self.enc6 = ConvBnRelu(64, 64, stride=1, rng=rng)
        self.lat2 = Conv2d(16, f, 1, padding=0, rng=rng)
        self.lat4 = Conv2d(32, f, 1, padding=0, rng=rng)
        self.lat8 = Conv2d(48, f, 1, padding=0, rng=rng)
        self.lat16 = Conv2d(64, f, 1, padding=0, rng=rng)
        self.smooth2 = Conv2d(f, f, 3, rng=rng)
        self.smooth4 = Conv2d(f, f, 3, rng=rng)
        self.smooth8 = Conv2d(f, f, 3, rng=rng)
        self.smooth16 = Conv2d(f, f, 3, rng=rng)

    def forward(self, image: Tensor) -> MultiScaleFeatures:
        _check_divisible(image)
        e2 = self.enc2(self.enc1(image))
        e4 = self.enc3(e2)
        e8 = self.enc4(e4)
        e16 = self.enc6(self.enc5(e8))
        p16 = self.lat16(e16)
        p8 = ops.add(self.lat8(e8), ops.upsample_nearest(p16, 2))
        p4 = ops.add(self.lat4(e4), ops.upsample_nearest(p8, 2))
        p2 = ops.add(self.lat2(e2), ops.upsample_nearest(p4, 2))
        return MultiScaleFeatures(by_scale={
            2: self.smooth2(p2),
            4: self.smooth4(p4),
            8: self.smooth8(p8),
            16: self.smooth16(p16),
        })


class FusionLayer(Module):
    """Aggregate the four scales into one matching feature at 1/4 scale.

    The half-scale map is pooled down, the coarse maps are upsampled, all
    four are concatenated (4 x 32 = 128 channels) and refined by a 3x3
    convolution, batch norm, relu, and a 1x1 convolution.
    """

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        c = MATCHING_CHANNELS
        self.conv0 = Conv2d(4 * FEATURE_CHANNELS, c, 3, rng=rng, bias=False)
        self.bn = BatchNorm2d(c)
        self.conv1 = Conv2d(c, c, 1, padding=0, rng=rng)

    def forward(self, ms: MultiScaleFeatures) -> Tensor:
        stack = ops.concat([
            ops.avg_pool_spatial(ms.by_scale[2], 2),
            ms.by_scale[4],
            ops.upsample_nearest(ms.by_scale[8], 2),
            ops.upsample_nearest(ms.by_scale[16], 4),
        ], axis=-1)
        return self.conv1(ops.relu(self.bn(self.conv0(stack))))


def sinusoidal_position_encoding(h: int, w: int, channels: int) -> np.ndarray:
    """Fixed 2D sinusoidal table: half the channels encode y, half x."""
    if channels % 4:
        raise ValueError("channel count must be divisible by 4")
    c4 = channels // 4
    omega = 1.0 / (10000.0 ** (np.arange(c4) / c4))
    ys = np.arange(h)[:, None] * omega[None, :]
    xs = np.arange(w)[:, None] * omega[None, :]
    pe = np.zeros((h, w, channels), dtype=np.float32)
    pe[..., 0 * c4:1 * c4] = np.sin(ys)[:, None, :]
    pe[..., 1 * c4:2 * c4] = np.cos(ys)[:, None, :]
    pe[..., 2 * c4:3 * c4] = np.sin(xs)[None, :, :]
    pe[..., 3 * c4:4 * c4] = np.cos(xs)[None, :, :]
    return pe


class AttentionAggregator(Module):
    """Gated four-head self-attention over the reference feature map.

    The residual gate starts at exactly zero, so an untrained model is
    bit-identical to one without the block.  Positional encoding is added
    to the query/key inputs; values see the raw features.
    """

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        c = MATCHING_CHANNELS
        h = ATTENTION_HEADS
        std = 1.0 / np.sqrt(c)
        self.w_query = parameter(rng.normal(0, std, size=(c, h * c)))
        self.w_key = parameter(rng.normal(0, std, size=(c, h * c)))
        self.w_value = parameter(rng.normal(0, std, size=(c, c)))
        self.gate = parameter(np.zeros(()))

    def forward(self, feat: Tensor) -> Tensor:
        hgt, wid, c = feat.shape
        heads = ATTENTION_HEADS
        pe = sinusoidal_position_encoding(hgt, wid, c).astype(feat.dtype)
        tokens = hgt * wid
        qk_in = ops.add(feat, pe).reshape((tokens, c))
        v_in = feat.reshape((tokens, c))

        def split_heads(x: Tensor, width: int) -> Tensor:
            return x.reshape((tokens, heads, width)).transpose((1, 0, 2))

        q = split_heads(ops.matmul(qk_in, self.w_query), c)
        k = split_heads(ops.matmul(qk_in, self.w_key), c)
        v = split_heads(ops.matmul(v_in, self.w_value), c // heads)
        scores = ops.mul(ops.matmul(q, k.transpose((0, 2, 1))),
                         float(1.0 / np.sqrt(c)))
        attn = ops.softmax_lastdim(scores)
        mixed = ops.matmul(attn, v)                      # (heads, T, c/heads)
        merged = mixed.transpose((1, 0, 2)).reshape((hgt, wid, c))
        return ops.add(feat, ops.mul(merged, self.gate))


class ContextEncoder(Module):
    """Residual-block context network with pooled branches per level.

    Each level's 128-channel head splits in half: the first 64 channels
    (tanh) seed the recurrent hidden state, the rest (relu) are injected
    into every update step.
    """

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        out_c = HIDDEN_CHANNELS + CONTEXT_CHANNELS
        self.stem = ConvBnRelu(3, 32, stride=2, rng=rng)          # 1/2
        self.block1 = ResidualBlock(32, 48, stride=2, rng=rng)    # 1/4
        self.block2 = ResidualBlock(48, 48, rng=rng)
        self.block3 = ResidualBlock(48, 64, rng=rng)              # on pooled 1/8
        self.block4 = ResidualBlock(64, 64, rng=rng)              # on pooled 1/16
        self.head4 = Conv2d(48, out_c, 3, rng=rng)
        self.head8 = Conv2d(64, out_c, 3, rng=rng)
        self.head16 = Conv2d(64, out_c, 3, rng=rng)

    def forward(self, image: Tensor) -> ContextFeatures:
        _check_divisible(image)
        f4 = self.block2(self.block1(self.stem(image)))
        f8 = self.block3(ops.avg_pool_spatial(f4, 2))
        f16 = self.block4(ops.avg_pool_spatial(f8, 2))
        heads = {4: self.head4(f4), 8: self.head8(f8), 16: self.head16(f16)}
        context, hidden = {}, {}
        for scale, x in heads.items():
            hidden[scale] = ops.tanh(x[:, :, :HIDDEN_CHANNELS])
            context[scale] = ops.relu(x[:, :, HIDDEN_CHANNELS:])
        return ContextFeatures(context=context, hidden_init=hidden)
