"""Residual pose prediction from the reference image and depth-warped source
images, plus the photometric supervision signal that trains it."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from . import geometry as geo
from .grad import Tensor, ops
from .nn import Conv2d, Linear, Module

OUTPUT_SCALE = 0.01
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WEIGHT = 0.85
L1_WEIGHT = 0.15


@dataclass
class ResidualPose:
    """Per-source-view corrective transform, rotation-only by default."""

    axis_angle: Tensor                  # (3,) or (6,) with translation
    rotation: np.ndarray                # detached 3x3, for volume rebuilds
    translation: np.ndarray             # detached 3-vector (zeros unless full SE3)

    def as_pose(self) -> geo.PoseSE3:
        return geo.PoseSE3(self.rotation, self.translation, check=False)


def rodrigues_tensor(v: Tensor) -> Tensor:
    """Differentiable Rodrigues map for a 3-vector tensor.

    Small angles take a Taylor branch in theta^2, so the Jacobian at zero is
    exact and nonzero (a hard identity shortcut would freeze a
    zero-initialized pose head forever).
    """
    t2 = ops.sum_(ops.mul(v, v))
    vx = v[0].reshape((1,))
    vy = v[1].reshape((1,))
    vz = v[2].reshape((1,))
    zero = np.zeros(1, dtype=v.dtype)
    k = ops.concat([zero, ops.neg(vz), vy,
                    vz, zero, ops.neg(vx),
                    ops.neg(vy), vx, zero], axis=0).reshape((3, 3))
    k2 = ops.matmul(k, k)
    if float(t2.data) < 1e-8:
        a = ops.add(ops.mul(t2, -1.0 / 6.0), 1.0)
        b = ops.add(ops.mul(t2, -1.0 / 24.0), 0.5)
    else:
        theta = ops.sqrt(t2)
        a = ops.div(ops.sin(theta), theta)
        b = ops.div(ops.sub(1.0, ops.cos(theta)), t2)
    eye = np.eye(3, dtype=v.dtype)
    return ops.add(eye, ops.add(ops.mul(k, a), ops.mul(k2, b)))


class PoseNetwork(Module):
    """Five strided convolutions over the 6-channel (reference, warped)
    stack, a global average pool, and a zero-initialized linear head whose
    output is scaled by 0.01."""

    def __init__(self, rng: np.random.Generator, full_se3: bool = False):
        super().__init__()
        self.full_se3 = full_se3
        widths = [(6, 16), (16, 32), (32, 48), (48, 64), (64, 64)]
        self.conv1 = Conv2d(*widths[0], 3, stride=2, rng=rng)
        self.conv2 = Conv2d(*widths[1], 3, stride=2, rng=rng)
        self.conv3 = Conv2d(*widths[2], 3, stride=2, rng=rng)
        self.conv4 = Conv2d(*widths[3], 3, stride=2, rng=rng)
        self.conv5 = Conv2d(*widths[4], 3, stride=2, rng=rng)
        self.head = Linear(64, 6 if full_se3 else 3, zero_init=True)

    def forward(self, stacked: Tensor) -> Tensor:
        x = stacked
        for conv in (self.conv1, self.conv2, self.conv3, self.conv4,
                     self.conv5):
            x = ops.relu(conv(x))
        pooled = x.mean(axis=(0, 1)).reshape((1, 64))
        raw = self.head(pooled).reshape(
            (6,) if self.full_se3 else (3,))
        return ops.mul(raw, OUTPUT_SCALE)


def warp_image(src_image: Union[Tensor, np.ndarray], depth: np.ndarray,
               intrinsics: geo.CameraIntrinsics, pose: geo.PoseSE3
               ) -> Tuple[Tensor, np.ndarray]:
    """Backward-warp a source image into the reference view at given depth.

    Pixels with invalid depth (<= 0), out-of-bounds samples, or
    behind-camera projections come back zeroed with a False mask.
    """
    depth = np.asarray(depth, dtype=np.float64)
    grid = geo.warp_grid(intrinsics, intrinsics, pose, np.maximum(depth, 1e-9))
    src = src_image if isinstance(src_image, Tensor) else Tensor(
        np.asarray(src_image, dtype=np.float32))
    warped, mask = ops.grid_sample_bilinear(src, grid.astype(src.dtype))
    mask = mask & (depth > 0)
    warped = ops.mul(warped, mask[..., None].astype(src.dtype))
    return warped, mask


def predict_residual_pose(net: PoseNetwork, ref_image: np.ndarray,
                          warped_src: Tensor) -> ResidualPose:
    """Residual transform for one source view from the photometric stack."""
    ref = Tensor(np.asarray(ref_image, dtype=warped_src.dtype) * 2.0 - 1.0)
    src = ops.add(ops.mul(warped_src, 2.0), -1.0)
    stacked = ops.concat([ref, src], axis=-1)
    out = net(stacked)
    axis_angle = out[:3] if net.full_se3 else out
    rotation = geo.axis_angle_to_rotation(axis_angle.data[:3])
    translation = np.asarray(out.data[3:6], dtype=np.float64) \
        if net.full_se3 else np.zeros(3)
    return ResidualPose(axis_angle=out, rotation=rotation,
                        translation=translation)


def select_depth_for_pose(d_pred: np.ndarray, d_gt: Optional[np.ndarray],
                          training: bool, rng: Optional[np.random.Generator],
                          prob_pred: float = 0.6) -> np.ndarray:
    """Pick the depth map fed to the pose net.

    Training draws the predicted map with probability ``prob_pred`` (one
    Bernoulli draw per sample), otherwise ground truth; inference always
    uses the prediction.
    """
    if not training:
        return d_pred
    if d_gt is None:
        raise ValueError("training-mode pose depth selection needs ground truth")
    if rng is None:
        raise ValueError("training-mode pose depth selection needs an rng")
    return d_pred if rng.random() < prob_pred else d_gt


def _box3(x: Tensor) -> Tensor:
    """3x3 mean filter with replicate borders (keeps shape)."""
    padded = ops.replicate_pad2d(x, 1)
    h, w = x.shape[:2]
    acc = None
    for dy in range(3):
        for dx in range(3):
            piece = padded[dy:dy + h, dx:dx + w]
            acc = piece if acc is None else ops.add(acc, piece)
    return ops.mul(acc, 1.0 / 9.0)


def ssim(a: Tensor, b: Tensor) -> Tensor:
    """Structural similarity map with 3x3 mean pooling."""
    mu_a = _box3(a)
    mu_b = _box3(b)
    var_a = ops.sub(_box3(ops.mul(a, a)), ops.mul(mu_a, mu_a))
    var_b = ops.sub(_box3(ops.mul(b, b)), ops.mul(mu_b, mu_b))
    cov = ops.sub(_box3(ops.mul(a, b)), ops.mul(mu_a, mu_b))
    num = ops.mul(ops.add(ops.mul(ops.mul(mu_a, mu_b), 2.0), SSIM_C1),
                  ops.add(ops.mul(cov, 2.0), SSIM_C2))
    den = ops.mul(ops.add(ops.add(ops.mul(mu_a, mu_a), ops.mul(mu_b, mu_b)),
                          SSIM_C1),
                  ops.add(ops.add(var_a, var_b), SSIM_C2))
    return ops.div(num, den)


def photometric_loss(ref: Union[Tensor, np.ndarray], warped: Tensor,
                     mask: np.ndarray) -> Tensor:
    """0.85 * (1 - SSIM)/2 + 0.15 * L1, averaged over valid pixels."""
    ref_t = ref if isinstance(ref, Tensor) else Tensor(
        np.asarray(ref, dtype=warped.dtype))
    if ref_t.shape != warped.shape:
        raise ValueError(f"shape mismatch: {ref_t.shape} vs {warped.shape}")
    n_valid = int(np.count_nonzero(mask))
    if n_valid == 0:
        warnings.warn("photometric loss over an empty mask; returning 0")
        return Tensor(np.zeros((), dtype=warped.dtype))
    l1 = ops.mean(ops.absolute(ops.sub(warped, ref_t)), axis=-1)
    dssim = ops.clamp(ops.mul(ops.sub(1.0, ssim(ref_t, warped)), 0.5),
                      0.0, 1.0).mean(axis=-1)
    per_pixel = ops.add(ops.mul(dssim, SSIM_WEIGHT), ops.mul(l1, L1_WEIGHT))
    weighted = ops.mul(per_pixel, mask.astype(warped.dtype))
    return ops.mul(weighted.sum(), 1.0 / n_valid)


def rectified_photometric_loss(ref_image: np.ndarray, src_image: np.ndarray,
                               depth: np.ndarray,
                               intrinsics: geo.CameraIntrinsics,
                               pose: geo.PoseSE3,
                               residual: ResidualPose) -> Tensor:
    """Photometric loss of the source warp under the corrected pose.

    The warp grid is built with tensor ops through the residual's
    axis-angle, so this is the (only) path that trains the pose network.
    Depth is treated as a constant.
    """
    h, w = depth.shape
    depth = np.asarray(depth, dtype=np.float64)
    rays = geo.pixel_grid(h, w)
    rays[..., 0] = (rays[..., 0] - intrinsics.cx) / intrinsics.fx
    rays[..., 1] = (rays[..., 1] - intrinsics.cy) / intrinsics.fy
    cam = (rays * np.maximum(depth, 1e-9)[..., None]) @ pose.rotation.T \
        + pose.translation                                    # before residual

    dtype = residual.axis_angle.dtype
    delta_rot = rodrigues_tensor(residual.axis_angle[:3])
    rotated = ops.matmul(Tensor(cam.reshape(-1, 3).astype(dtype)),
                         delta_rot.transpose((1, 0)))
    if residual.axis_angle.shape[0] > 3:
        rotated = ops.add(rotated,
                          residual.axis_angle[3:6].reshape((1, 3)))
    x = rotated[:, 0].reshape((h, w))
    y = rotated[:, 1].reshape((h, w))
    z = rotated[:, 2].reshape((h, w))
    behind = z.data <= 1e-12
    z_safe = ops.add(ops.mul(z, (~behind).astype(z.dtype)),
                     behind.astype(z.dtype))
    u = ops.add(ops.mul(ops.div(x, z_safe), intrinsics.fx), intrinsics.cx)
    v = ops.add(ops.mul(ops.div(y, z_safe), intrinsics.fy), intrinsics.cy)
    oob = np.full((h, w), geo._INVALID_COORD, dtype=dtype)
    u = ops.where(behind, oob, u)
    v = ops.where(behind, oob, v)
    grid = ops.concat([u.reshape((h, w, 1)), v.reshape((h, w, 1))], axis=-1)
    src = Tensor(np.asarray(src_image, dtype=dtype))
    warped, mask = ops.grid_sample_bilinear(src, grid)
    mask = mask & (depth > 0)
    warped = ops.mul(warped, mask[..., None].astype(dtype))
    return photometric_loss(ref_image, warped, mask)
