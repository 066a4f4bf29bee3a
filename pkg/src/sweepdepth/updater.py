"""Recurrent index-field optimization: softargmin start, GRU updates,
convex upsampling, fine-bin depth sampling, and the full iteration loop
with optional mid-run pose rectification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import costvol
from . import encoder as enc
from . import geometry as geo
from . import posenet
from .data import SceneSample
from .grad import Tensor, ops
from .nn import Conv2d, Module

UPSAMPLE_FACTOR = 4
NEIGHBORS = 9
SUBPIXELS = UPSAMPLE_FACTOR * UPSAMPLE_FACTOR
DEPTH_TAP_RADIUS = 4


def softargmin_start(volume: costvol.CostVolume) -> Tensor:
    """Probability-weighted expected bin index under a softmax over costs."""
    m = volume.num_bins
    probs = ops.softmax_lastdim(volume.values)
    idx = np.arange(m, dtype=volume.values.dtype)
    return ops.sum_(ops.mul(probs, idx), axis=-1)


class ConvGru(Module):
    """Convolutional gated recurrent cell over (H, W, C) maps.

    Update and reset gates share one fused convolution.
    """

    def __init__(self, hidden: int, input_ch: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.gates = Conv2d(hidden + input_ch, 2 * hidden, 3, rng=rng)
        self.candidate = Conv2d(hidden + input_ch, hidden, 3, rng=rng)

    def forward(self, hidden: Tensor, inputs: Tensor) -> Tensor:
        hx = ops.concat([hidden, inputs], axis=-1)
        zr = ops.sigmoid(self.gates(hx))
        z = zr[:, :, :self.hidden]
        r = zr[:, :, self.hidden:]
        rx = ops.concat([ops.mul(r, hidden), inputs], axis=-1)
        q = ops.tanh(self.candidate(rx))
        one_minus = ops.sub(1.0, z)
        return ops.add(ops.mul(one_minus, hidden), ops.mul(z, q))


class RecurrentUpdater(Module):
    """Three-level GRU stack with coarse-to-fine cross connections.

    Only the finest level emits the residual index field; the heads for the
    spatial upsample mask and the fine-bin weight mask read the finest
    hidden state and share weights across iterations.
    """

    def __init__(self, rng: np.random.Generator, lookup_channels: int,
                 num_bins: int, fine_bins: int):
        super().__init__()
        hid = enc.HIDDEN_CHANNELS
        ctx = enc.CONTEXT_CHANNELS
        self.gru_coarse = ConvGru(hid, ctx + hid, rng)            # 1/16
        self.gru_mid = ConvGru(hid, ctx + 2 * hid, rng)           # 1/8
        self.gru_fine = ConvGru(hid, 1 + lookup_channels + ctx + hid, rng)
        self.delta_head1 = Conv2d(hid, 48, 3, rng=rng)
        self.delta_head2 = Conv2d(48, 1, 3, zero_init=True)
        self.neighbor_head1 = Conv2d(hid, 128, 3, rng=rng)
        self.neighbor_head2 = Conv2d(128, SUBPIXELS * NEIGHBORS, 1,
                                     padding=0, rng=rng)
        self.bin_head1 = Conv2d(hid, 96, 3, rng=rng)
        self.bin_head2 = Conv2d(96, 96, 3, rng=rng)
        self.bin_head3 = Conv2d(96, fine_bins, 1, padding=0, rng=rng)

    def step(self, index_field: Tensor, looked: Tensor,
             context: Dict[int, Tensor],
             state: Dict[int, Tensor]) -> tuple[Tensor, Dict[int, Tensor]]:
        """One coarse-to-fine update; returns the residual index field."""
        new_state = dict(state)
        coarse_in = ops.concat(
            [context[16], ops.avg_pool_spatial(state[8], 2)], axis=-1)
        new_state[16] = self.gru_coarse(state[16], coarse_in)
        mid_in = ops.concat([context[8],
                             ops.avg_pool_spatial(state[4], 2),
                             ops.upsample_nearest(new_state[16], 2)], axis=-1)
        new_state[8] = self.gru_mid(state[8], mid_in)
        h, w = index_field.shape
        fine_in = ops.concat([index_field.reshape((h, w, 1)),
                              looked,
                              context[4],
                              ops.upsample_nearest(new_state[8], 2)], axis=-1)
        new_state[4] = self.gru_fine(state[4], fine_in)
        delta = self.delta_head2(ops.relu(self.delta_head1(new_state[4])))
        return delta.reshape((h, w)), new_state

    def neighbor_mask(self, hidden_fine: Tensor) -> Tensor:
        """Logits of the 3x3 convex-combination mask, (H, W, 16*9)."""
        return self.neighbor_head2(ops.relu(self.neighbor_head1(hidden_fine)))

    def bin_mask(self, hidden_fine: Tensor) -> Tensor:
        """Nonnegative fine-bin weights at 1/4 resolution, (H, W, M1)."""
        x = ops.relu(self.bin_head1(hidden_fine))
        x = ops.relu(self.bin_head2(x))
        return ops.sigmoid(self.bin_head3(x))


def convex_upsample(index_field: Tensor, neighbor_logits: Tensor) -> Tensor:
    """Upsample a 1/4-resolution field by learned 3x3 convex combinations.

    Each fine pixel mixes the replicate-padded 3x3 coarse neighborhood of
    its parent cell with softmax weights; index values are bin indices, so
    no value rescaling happens.
    """
    h, w = index_field.shape
    padded = ops.replicate_pad2d(index_field.reshape((h, w, 1)), 1)
    shifts = []
    for dy in range(3):
        for dx in range(3):
            shifts.append(padded[dy:dy + h, dx:dx + w])
    neighborhood = ops.concat(shifts, axis=-1)                 # (H, W, 9)
    weights = ops.softmax_lastdim(
        neighbor_logits.reshape((h, w, SUBPIXELS, NEIGHBORS)))
    mixed = ops.sum_(ops.mul(weights,
                             neighborhood.reshape((h, w, 1, NEIGHBORS))),
                     axis=-1)                                  # (H, W, 16)
    k = UPSAMPLE_FACTOR
    tiles = mixed.reshape((h, w, k, k)).transpose((0, 2, 1, 3))
    return tiles.reshape((h * k, w * k))


def sample_depth(index_field_full: Tensor, bin_weights_full: Tensor,
                 fine_bins: geo.DepthBins, scale: int) -> Tensor:
    """Weighted fine-bin sampling around the rescaled index field.

    psi = clamp(scale * index, 0, M1-1); taps at integer offsets within
    +/-4 of psi contribute bin depths (linearly interpolated) weighted by
    the mask channel at floor(tap); out-of-range taps drop from numerator
    and denominator.  A pixel whose window weights are all zero falls back
    to plain interpolation at psi.
    """
    h, w = index_field_full.shape
    m1 = len(fine_bins)
    table = fine_bins.values.astype(index_field_full.dtype)
    psi = ops.clamp(ops.mul(index_field_full, float(scale)), 0.0,
                    float(m1 - 1))
    base = np.floor(psi.data).astype(np.int64)
    frac = ops.sub(psi, base.astype(psi.dtype))

    offsets = np.arange(-DEPTH_TAP_RADIUS, DEPTH_TAP_RADIUS + 1)
    tap_floor = base[..., None] + offsets                     # (H, W, 9)
    valid = (tap_floor >= 0) & (tap_floor <= m1 - 1)
    # psi is in range, so the j=0 tap is always valid
    weights = ops.gather_lastdim(bin_weights_full, tap_floor, valid)

    lo = np.clip(tap_floor, 0, m1 - 1)
    hi = np.clip(tap_floor + 1, 0, m1 - 1)
    b_lo = table[lo]
    b_hi = table[hi]
    depths = ops.add(ops.mul(frac.reshape((h, w, 1)), b_hi - b_lo), b_lo)

    numer = ops.sum_(ops.mul(weights, depths), axis=-1)
    denom = ops.sum_(weights, axis=-1)
    degenerate = denom.data == 0
    denom_safe = ops.add(denom, degenerate.astype(denom.dtype))
    fallback = ops.add(ops.mul(frac, table[np.minimum(base + 1, m1 - 1)]
                               - table[base]), table[base])
    return ops.where(degenerate, fallback, ops.div(numer, denom_safe))


@dataclass
class RunResult:
    """Everything one optimization run produces."""

    depths: List[Tensor]                     # one (H, W) map per iteration
    index_fields: List[Tensor]               # 1/4-resolution fields, per iter
    poses: List[geo.PoseSE3]                  # possibly rectified
    photometric: Optional[Tensor] = None      # pose supervision term
    attention_views: List[int] = field(default_factory=list)
    pose_corrections: List[posenet.ResidualPose] = field(default_factory=list)


class DepthModel(Module):
    """The full network: encoders, attention, cost volume, and updater."""

    def __init__(self, rng: np.random.Generator,
                 use_attention: bool = True,
                 use_pose: bool = True,
                 num_bins: int = 64,
                 fine_bins: int = 256,
                 d_min: float = 0.25,
                 d_max: float = 20.0,
                 lookup_radius: int = costvol.LOOKUP_RADIUS,
                 include_unpooled: bool = False,
                 pose_full_se3: bool = False):
        super().__init__()
        self.use_attention = use_attention
        self.use_pose = use_pose
        self.num_bins = num_bins
        self.fine_scale = fine_bins // num_bins
        self.lookup_radius = lookup_radius
        self.include_unpooled = include_unpooled
        self.bins = geo.make_depth_bins(d_min, d_max, num_bins)
        self.fine_bins = geo.make_depth_bins(d_min, d_max, fine_bins)
        levels = costvol.PYRAMID_POOLINGS + (1 if include_unpooled else 0)
        lookup_channels = levels * (2 * lookup_radius + 1)

        self.fnet = enc.FeatureEncoder(rng)
        self.fusion = enc.FusionLayer(rng)
        if use_attention:
            self.attention = enc.AttentionAggregator(rng)
        self.cnet = enc.ContextEncoder(rng)
        self.updater = RecurrentUpdater(rng, lookup_channels, num_bins,
                                        fine_bins)
        if use_pose:
            self.pose_net = posenet.PoseNetwork(rng, full_se3=pose_full_se3)

    # -- encoding ------------------------------------------------------------

    def matching_features(self, image01: np.ndarray) -> Tensor:
        return self.fusion(self.fnet(enc.normalize_image(image01)))

    def encode_views(self, sample: SceneSample, trace: List[int]) -> tuple:
        ref_feat = self.matching_features(sample.ref_image)
        if self.use_attention:
            ref_feat = self.attention(ref_feat)
            trace.append(0)
        src_feats = [self.matching_features(img) for img in sample.src_images]
        context = self.cnet(enc.normalize_image(sample.ref_image))
        return ref_feat, src_feats, context

    # -- iteration loop -------------------------------------------------------

    def run(self, sample: SceneSample, iterations: int,
            t_pose: Optional[int] = None,
            training: bool = False,
            rng: Optional[np.random.Generator] = None,
            pose_depth_prob: float = 0.6) -> RunResult:
        """Optimize the index field for ``iterations`` steps.

        When the pose branch is active, iteration ``t_pose`` (1-indexed,
        default half the budget) re-estimates the relative poses from the
        current depth, rebuilds the cost volume with the corrected poses,
        and continues.
        """
        if iterations < 1:
            raise ValueError("at least one iteration is required")
        if t_pose is None:
            t_pose = iterations // 2
        if t_pose >= iterations:
            raise ValueError(f"t_pose={t_pose} must stay below "
                             f"iterations={iterations}")

        trace: List[int] = []
        ref_feat, src_feats, context = self.encode_views(sample, trace)
        quarter = sample.intrinsics.scaled(UPSAMPLE_FACTOR)
        poses = sample.relative_poses()

        volume = costvol.build_cost_volume(ref_feat, src_feats, self.bins,
                                           quarter, poses)
        pyramid = costvol.build_matching_pyramid(volume)
        index_field = softargmin_start(volume)
        state = dict(context.hidden_init)

        result = RunResult(depths=[], index_fields=[], poses=poses,
                           attention_views=trace)
        for t in range(1, iterations + 1):
            looked = costvol.lookup(pyramid, index_field,
                                    radius=self.lookup_radius,
                                    include_unpooled=self.include_unpooled)
            delta, state = self.updater.step(index_field, looked,
                                             context.context, state)
            index_field = ops.clamp(ops.add(index_field, delta), 0.0,
                                    float(self.num_bins - 1))
            up = convex_upsample(index_field,
                                 self.updater.neighbor_mask(state[4]))
            bin_weights = ops.upsample_bilinear(
                self.updater.bin_mask(state[4]), UPSAMPLE_FACTOR)
            depth = sample_depth(up, bin_weights, self.fine_bins,
                                 self.fine_scale)
            result.depths.append(depth)
            result.index_fields.append(index_field)

            if self.use_pose and t == t_pose:
                poses, photometric, corrections = self._pose_step(
                    sample, depth.data, poses, training, rng,
                    pose_depth_prob)
                result.poses = poses
                result.photometric = photometric
                result.pose_corrections = corrections
                volume = costvol.build_cost_volume(ref_feat, src_feats,
                                                   self.bins, quarter, poses)
                pyramid = costvol.build_matching_pyramid(volume)
        return result

    def _pose_step(self, sample: SceneSample, depth_now: np.ndarray,
                   poses: List[geo.PoseSE3], training: bool,
                   rng: Optional[np.random.Generator],
                   pose_depth_prob: float):
        gt = sample.gt_depth if np.any(sample.gt_depth > 0) else None
        chosen = posenet.select_depth_for_pose(
            depth_now, gt if training else None, training, rng,
            prob_pred=pose_depth_prob)
        losses = []
        corrections = []
        rectified = []
        for src_img, pose in zip(sample.src_images, poses):
            warped, _ = posenet.warp_image(src_img, chosen,
                                           sample.intrinsics, pose)
            residual = posenet.predict_residual_pose(
                self.pose_net, sample.ref_image, warped)
            corrections.append(residual)
            rectified.append(geo.rectify_pose(residual.as_pose(), pose))
            losses.append(posenet.rectified_photometric_loss(
                sample.ref_image, src_img, chosen, sample.intrinsics,
                pose, residual))
        total = losses[0]
        for extra in losses[1:]:
            total = ops.add(total, extra)
        photometric = ops.mul(total, 1.0 / len(losses))
        return rectified, photometric, corrections


def run_iterations(model: DepthModel, sample: SceneSample, iterations: int,
                   t_pose: Optional[int] = None, **kwargs) -> RunResult:
    return model.run(sample, iterations, t_pose=t_pose, **kwargs)


_MODEL_CONFIG_FIELDS = ("use_attention", "use_pose", "num_bins",
                        "lookup_radius", "include_unpooled")


def save_model(path, model: DepthModel) -> None:
    """Serialize weights, normalization buffers, and model structure."""
    arrays = {
        "config.use_attention": np.float32(model.use_attention),
        "config.use_pose": np.float32(model.use_pose),
        "config.num_bins": np.float32(model.num_bins),
        "config.fine_bins": np.float32(len(model.fine_bins)),
        "config.d_min": np.float32(model.bins.d_min),
        "config.d_max": np.float32(model.bins.d_max),
        "config.lookup_radius": np.float32(model.lookup_radius),
        "config.include_unpooled": np.float32(model.include_unpooled),
        "config.pose_full_se3": np.float32(
            model.pose_net.full_se3 if model.use_pose else 0.0),
    }
    for name, p in model.named_parameters():
        arrays[f"param.{name}"] = p.data
    for name, b in model.named_buffers():
        arrays[f"buffer.{name}"] = b
    checkpoint.write_arrays(path, arrays)


def load_model(path) -> DepthModel:
    arrays = checkpoint.read_arrays(path)
    cfg = {k[len("config."):]: float(v) for k, v in arrays.items()
           if k.startswith("config.")}
    model = DepthModel(
        np.random.default_rng(0),
        use_attention=bool(cfg["use_attention"]),
        use_pose=bool(cfg["use_pose"]),
        num_bins=int(cfg["num_bins"]),
        fine_bins=int(cfg["fine_bins"]),
        d_min=cfg["d_min"],
        d_max=cfg["d_max"],
        lookup_radius=int(cfg["lookup_radius"]),
        include_unpooled=bool(cfg["include_unpooled"]),
        pose_full_se3=bool(cfg.get("pose_full_se3", 0.0)))
    state = {}
    for key, value in arrays.items():
        if key.startswith("param."):
            state[key[len("param."):]] = value
        elif key.startswith("buffer."):
            state[key[len("buffer."):]] = value
    model.load_state_dict(state)
    return model
