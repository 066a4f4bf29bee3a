"""The gradient verification sweep: every differentiable primitive and every
composite path checked against central finite differences in float64 on
small inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import costvol
from . import encoder as enc
from . import geometry as geo
from . import posenet
from . import training
from . import updater
from .grad import Tensor, finite_difference_check, loss_gradient_check, ops

DEFAULT_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_relative_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def _rand(shape, seed, scale=1.0, offset=0.0):
    return np.random.default_rng(seed).standard_normal(shape) * scale + offset


def _corrupt(out: Tensor) -> Tensor:
    """Test fixture: scale the backward gradient so the check must fail."""
    real = out._backward
    if real is not None:
        out._backward = lambda g: real(g * 1.37)
    return out


def _wrap(op: Callable, corrupt: bool) -> Callable:
    if not corrupt:
        return op

    def wrapped(*args):
        result = op(*args)
        if isinstance(result, tuple):
            return _corrupt(result[0])
        return _corrupt(result)

    return wrapped


def _primitive_checks(sabotage: Optional[str]):
    """(name, inputs, op, tolerance) table for the primitive sweep."""
    grid = np.random.default_rng(40).uniform(0.6, 4.2, (3, 3, 2))
    pos = np.random.default_rng(41).uniform(0.3, 6.4, (2, 2, 5))
    gather_idx = np.array([[[0, 3], [2, 1]]])
    checks = [
        ("grid_sample_bilinear",
         [_rand((6, 6, 2), 1), grid],
         lambda s, g: ops.grid_sample_bilinear(s, g), 1e-4),
        ("softmax_lastdim", [_rand(8, 2)], ops.softmax_lastdim, 1e-6),
        ("conv2d", [_rand((5, 5, 2), 3), _rand((3, 3, 2, 3), 4, 0.4),
                    _rand(3, 5, 0.1)],
         lambda x, w, b: ops.conv2d(x, w, b, padding=1), 1e-5),
        ("conv2d_strided", [_rand((6, 6, 2), 6), _rand((3, 3, 2, 2), 7, 0.4)],
         lambda x, w: ops.conv2d(x, w, None, stride=2, padding=1), 1e-5),
        ("matmul", [_rand((4, 3), 8), _rand((3, 5), 9)], ops.matmul, 1e-6),
        ("matmul_batched", [_rand((2, 3, 4), 10), _rand((2, 4, 3), 11)],
         ops.matmul, 1e-6),
        ("add_mul_broadcast", [_rand((3, 1, 4), 12), _rand((2, 4), 13)],
         lambda a, b: ops.mul(ops.add(a, b), b), 1e-6),
        ("relu", [_rand((3, 4), 14) + 0.05], ops.relu, 1e-6),
        ("tanh", [_rand((3, 4), 15)], ops.tanh, 1e-6),
        ("sigmoid", [_rand((3, 4), 16)], ops.sigmoid, 1e-6),
        ("exp_log_sqrt", [np.abs(_rand((3, 3), 17)) + 0.5],
         lambda a: ops.log(ops.sqrt(ops.exp(a))), 1e-6),
        ("abs", [_rand((3, 4), 18) + 0.08], ops.absolute, 1e-6),
        ("batch_norm_train", [_rand((4, 4, 2), 19), np.array([1.1, 0.9]),
                              np.array([0.1, -0.2])],
         lambda x, g, b: ops.batch_norm_train(x, g, b)[0], 1e-4),
        ("avg_pool_depth", [_rand((2, 2, 8), 20)], ops.avg_pool_depth, 1e-6),
        ("avg_pool_spatial", [_rand((4, 4, 2), 21)],
         lambda x: ops.avg_pool_spatial(x, 2), 1e-6),
        ("upsample_nearest", [_rand((3, 3, 2), 22)],
         lambda x: ops.upsample_nearest(x, 2), 1e-6),
        ("upsample_bilinear", [_rand((3, 3, 2), 23)],
         lambda x: ops.upsample_bilinear(x, 4), 1e-6),
        ("lookup_depth_linear", [_rand((2, 2, 8), 24), pos],
         lambda v, p: ops.lookup_depth_linear(v, p), 1e-5),
        ("gather_lastdim", [_rand((1, 2, 4), 25)],
         lambda x: ops.gather_lastdim(x, gather_idx), 1e-6),
        ("replicate_pad", [_rand((3, 3, 1), 26)],
         lambda x: ops.replicate_pad2d(x, 1), 1e-6),
        ("concat_transpose_sum", [_rand((2, 2, 3), 27), _rand((2, 2, 2), 28)],
         lambda a, b: ops.concat([a, b], axis=-1).transpose(
             (2, 0, 1)).sum(axis=0), 1e-6),
    ]
    results = []
    for name, inputs, op, tol in checks:
        err = finite_difference_check(_wrap(op, sabotage == name), inputs)
        results.append(CheckResult(name, err, tol))
    return results


def _composite_checks(sabotage: Optional[str]):
    """Gradient checks through each assembled pipeline stage."""
    results = []

    def loss_check(name, build_loss, tensors, tol=DEFAULT_TOLERANCE,
                   max_elements=16):
        wrapped = build_loss
        if sabotage == name:
            def wrapped():
                return _corrupt(build_loss())
        err = loss_gradient_check(wrapped, tensors, max_elements=max_elements)
        results.append(CheckResult(name, err, tol))

    # fusion layer
    fuse = enc.FusionLayer(np.random.default_rng(50)).astype(np.float64)
    maps = {s: Tensor(_rand((16 // s, 16 // s, 32), 51 + s), requires_grad=True)
            for s in (2, 4, 8, 16)}
    loss_check(
        "fusion_layer",
        lambda: fuse(enc.MultiScaleFeatures(by_scale=maps)).sum(),
        {"f4": maps[4], "w0": fuse.conv0.weight, "gamma": fuse.bn.gamma})

    # attention block
    att = enc.AttentionAggregator(np.random.default_rng(52)).astype(np.float64)
    att.gate.data = np.array(0.5)
    feat = Tensor(_rand((2, 3, 128), 53, 0.3), requires_grad=True)
    loss_check("attention_block", lambda: att(feat).sum(),
               {"feat": feat, "wq": att.w_query, "wk": att.w_key,
                "wv": att.w_value, "gate": att.gate}, max_elements=12)

    # cost volume
    intr = geo.CameraIntrinsics(10.0, 10.0, 2.0, 2.0, 4, 4)
    bins = geo.make_depth_bins(1.0, 3.0, 8)
    pose = geo.PoseSE3(geo.axis_angle_to_rotation([0.0, 0.01, 0.0]),
                       np.array([0.05, 0.02, 0.0]))
    ref = Tensor(_rand((4, 4, 6), 54), requires_grad=True)
    src = Tensor(_rand((4, 4, 6), 55), requires_grad=True)
    loss_check(
        "cost_volume",
        lambda: costvol.build_cost_volume(
            ref, [src], bins, intr, [pose]).values.sum(),
        {"ref": ref, "src": src})

    # pyramid lookup
    vol_values = Tensor(_rand((3, 3, 16), 56), requires_grad=True)
    phi_small = Tensor(np.random.default_rng(57).uniform(2.2, 13.4, (3, 3)),
                       requires_grad=True)

    def lookup_loss():
        vol = costvol.CostVolume(vol_values, geo.make_depth_bins(0.5, 8, 16),
                                 np.ones((3, 3, 16)))
        pyr = costvol.build_matching_pyramid(vol)
        return costvol.lookup(pyr, phi_small).sum()

    loss_check("matching_lookup", lookup_loss,
               {"volume": vol_values, "phi": phi_small})

    # recurrent update step
    model = updater.DepthModel(np.random.default_rng(58), use_attention=False,
                               use_pose=False, num_bins=16).astype(np.float64)
    ctx = {s: Tensor(np.abs(_rand((16 // s, 16 // s, 64), 59 + s, 0.3)))
           for s in (4, 8, 16)}
    state = {s: Tensor(np.tanh(_rand((16 // s, 16 // s, 64), 62 + s, 0.4)))
             for s in (4, 8, 16)}
    phi_gru = Tensor(np.random.default_rng(65).uniform(2.0, 13.0, (4, 4)),
                     requires_grad=True)
    vol_gru = Tensor(_rand((4, 4, 16), 66), requires_grad=True)

    def gru_loss():
        vol = costvol.CostVolume(vol_gru, geo.make_depth_bins(0.5, 8, 16),
                                 np.ones((4, 4, 16)))
        pyr = costvol.build_matching_pyramid(vol)
        looked = costvol.lookup(pyr, phi_gru)
        delta, new_state = model.updater.step(phi_gru, looked, ctx, state)
        return ops.add(delta.sum(), new_state[4].sum())

    loss_check("gru_step", gru_loss,
               {"phi": phi_gru, "volume": vol_gru,
                "gates": model.updater.gru_fine.gates.weight,
                "head": model.updater.delta_head1.weight})

    # convex upsampling
    phi_up = Tensor(np.random.default_rng(67).uniform(1, 14, (2, 2)),
                    requires_grad=True)
    logits = Tensor(_rand((2, 2, 144), 68), requires_grad=True)
    loss_check("convex_upsample",
               lambda: updater.convex_upsample(phi_up, logits).sum(),
               {"phi": phi_up, "logits": logits})

    # fine-bin depth sampling
    bins32 = geo.make_depth_bins(0.5, 8.0, 32)
    phi_depth = Tensor(np.random.default_rng(69).uniform(1.3, 6.2, (2, 2)),
                       requires_grad=True)
    weights = Tensor(np.random.default_rng(70).uniform(0.2, 1.0, (2, 2, 32)),
                     requires_grad=True)
    loss_check("depth_sampling",
               lambda: updater.sample_depth(phi_depth, weights, bins32,
                                            4).sum(),
               {"phi": phi_depth, "weights": weights})

    # sequence loss over iterations
    gt = np.random.default_rng(71).uniform(1.0, 6.0, (3, 3))
    seq = [Tensor(gt + _rand((3, 3), 72 + t, 0.2), requires_grad=True)
           for t in range(3)]
    loss_check("sequence_loss",
               lambda: training.depth_loss(seq, gt, (0.25, 20.0), 0.9),
               {f"d{t}": d for t, d in enumerate(seq)})

    # photometric loss
    ref_img = np.random.default_rng(75).random((8, 8, 3))
    warped = Tensor(np.random.default_rng(76).random((8, 8, 3)),
                    requires_grad=True)
    mask = np.ones((8, 8), dtype=bool)
    loss_check("photometric_loss",
               lambda: posenet.photometric_loss(ref_img, warped, mask),
               {"warped": warped})

    # residual-pose path: axis angle -> rectified warp -> photometric
    axis = Tensor(np.array([0.004, -0.003, 0.002]), requires_grad=True)
    src_img = np.random.default_rng(77).random((8, 8, 3))
    depth_map = np.full((8, 8), 2.0)
    k_small = geo.CameraIntrinsics(9.0, 9.0, 4.0, 4.0, 8, 8)

    def pose_path_loss():
        residual = posenet.ResidualPose(
            axis_angle=axis, rotation=geo.axis_angle_to_rotation(axis.data),
            translation=np.zeros(3))
        # the y offset keeps warped coordinates away from bilinear kinks
        return posenet.rectified_photometric_loss(
            ref_img, src_img, depth_map, k_small,
            geo.PoseSE3(np.eye(3), np.array([0.1, 0.07, 0.0])), residual)

    loss_check("residual_pose_path", pose_path_loss, {"axis_angle": axis})

    return results


def run_suite(sabotage: Optional[str] = None) -> List[CheckResult]:
    """Run every gradient check; optionally corrupt one by name."""
    return _primitive_checks(sabotage) + _composite_checks(sabotage)
