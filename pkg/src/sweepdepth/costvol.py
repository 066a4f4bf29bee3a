"""Plane-sweep cost volume, the depth-pooled matching pyramid, and the
sub-pixel lookup operator feeding the recurrent updater."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from . import checkpoint
from . import geometry as geo
from .grad import Tensor, ops

LOOKUP_RADIUS = 4
PYRAMID_POOLINGS = 4


@dataclass
class CostVolume:
    """Per-pixel matching scores over the depth hypotheses (H, W, M)."""

    values: Tensor
    bins: geo.DepthBins
    valid_counts: np.ndarray     # same shape, number of contributing views

    @property
    def num_bins(self) -> int:
        return self.values.shape[-1]


@dataclass
class MatchingPyramid:
    """Depth-pooled copies of the volume; level k has extent M / 2^k."""

    levels: List[Tensor]         # levels[0] is the unpooled volume

    def __post_init__(self):
        for prev, cur in zip(self.levels, self.levels[1:]):
            if prev.shape[-1] != 2 * cur.shape[-1]:
                raise ValueError("each pyramid level must halve the depth extent")


def build_cost_volume(ref_feat: Tensor,
                      src_feats: Sequence[Tensor],
                      bins: geo.DepthBins,
                      intrinsics: Union[geo.CameraIntrinsics,
                                        Sequence[geo.CameraIntrinsics]],
                      poses: Sequence[geo.PoseSE3]) -> CostVolume:
    """Correlate the reference features against every warped source view.

    For each hypothesis the source features are warped into the reference
    frame (backward grid sampling) and scored by the channel dot product
    scaled by 1/sqrt(channels).  Scores average over the views whose sample
    was valid at that pixel; with no valid view the cell is 0.

    ``intrinsics``: either one shared camera (already at feature resolution)
    or a per-view list ordered [reference, source...].
    """
    if len(src_feats) == 0:
        raise ValueError("at least one source view is required")
    if len(src_feats) != len(poses):
        raise ValueError("one relative pose per source view is required")
    h, w, channels = ref_feat.shape
    if isinstance(intrinsics, geo.CameraIntrinsics):
        k_ref, k_srcs = intrinsics, [intrinsics] * len(src_feats)
    else:
        k_ref, k_srcs = intrinsics[0], list(intrinsics[1:])
    if (k_ref.height, k_ref.width) != (h, w):
        raise ValueError(f"intrinsics are for {k_ref.height}x{k_ref.width}, "
                         f"features are {h}x{w}")

    m = len(bins)
    scale = float(1.0 / np.sqrt(channels))
    total: Optional[Tensor] = None
    counts = np.zeros((m, h, w), dtype=np.float64)
    for feat, pose, k_src in zip(src_feats, poses, k_srcs):
        grids = np.concatenate(
            [geo.warp_grid(k_ref, k_src, pose, float(d)) for d in bins.values],
            axis=0).astype(ref_feat.dtype)               # (M*H, W, 2)
        warped, mask = ops.grid_sample_bilinear(feat, grids)
        warped = warped.reshape((m, h, w, channels))
        mask = mask.reshape(m, h, w)
        score = ops.mul(ops.sum_(ops.mul(warped, ref_feat), axis=-1), scale)
        score = ops.mul(score, mask.astype(ref_feat.dtype))
        total = score if total is None else ops.add(total, score)
        counts += mask
    averaged = ops.mul(total, (1.0 / np.maximum(counts, 1.0)
                               ).astype(ref_feat.dtype))
    values = averaged.transpose((1, 2, 0))
    return CostVolume(values=values, bins=bins,
                      valid_counts=counts.transpose(1, 2, 0))


def build_matching_pyramid(volume: CostVolume) -> MatchingPyramid:
    """Repeated kernel-2 mean pooling along the depth dimension.

    Pools up to four times while the extent stays even, so the default 64
    hypotheses produce extents 64, 32, 16, 8, 4; smaller even extents stop
    early (8 gives 8, 4, 2, 1).  Odd extents are rejected.
    """
    m = volume.num_bins
    if m % 2:
        raise ValueError(f"depth extent {m} is not divisible for pooling")
    levels = [volume.values]
    while len(levels) <= PYRAMID_POOLINGS and levels[-1].shape[-1] % 2 == 0:
        levels.append(ops.avg_pool_depth(levels[-1]))
    return MatchingPyramid(levels=levels)


def lookup(pyramid: MatchingPyramid, index_field: Tensor,
           radius: int = LOOKUP_RADIUS,
           include_unpooled: bool = False) -> Tensor:
    """Sample every pyramid level around the index field.

    Taps at integer offsets within +/- radius of the (level-rescaled) index
    are linearly interpolated along depth, zero-filled outside the level's
    extent, and concatenated: 4 levels x (2r+1) taps = 36 channels by
    default, 45 with the unpooled level included.
    """
    m0 = pyramid.levels[0].shape[-1]
    phi = ops.clamp(index_field, 0.0, float(m0 - 1))
    h, w = phi.shape
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    first = 0 if include_unpooled else 1
    taps = []
    for level in range(first, len(pyramid.levels)):
        centers = ops.mul(phi, 1.0 / (2 ** level)).reshape((h, w, 1))
        positions = ops.add(centers, offsets.astype(phi.dtype))
        taps.append(ops.lookup_depth_linear(pyramid.levels[level], positions))
    return ops.concat(taps, axis=-1)


def dump_cost_volume(path, volume: CostVolume) -> None:
    """Serialize a volume for offline inspection (checkpoint array format)."""
    checkpoint.write_arrays(path, {
        "cost_volume": volume.values.data,
        "depth_bins": volume.bins.values,
        "valid_counts": volume.valid_counts,
    })
