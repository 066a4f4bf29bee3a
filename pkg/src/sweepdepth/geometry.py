"""Camera models, rigid poses, inverse-depth hypothesis binning, and the
backward homography warp that drives plane-sweep matching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Union

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    def scaled(self, s: float) -> "CameraIntrinsics":
        """Intrinsics for the 1/s resolution image (all four params divide)."""
        return CameraIntrinsics(self.fx / s, self.fy / s,
                                self.cx / s, self.cy / s,
                                int(round(self.width / s)),
                                int(round(self.height / s)))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @staticmethod
    def parse(line: str) -> "CameraIntrinsics":
        vals = line.split()
        if len(vals) != 6:
            raise ValueError(f"intrinsics line needs 6 fields, got {len(vals)}")
        fx, fy, cx, cy, w, h = (float(v) for v in vals)
        return CameraIntrinsics(fx, fy, cx, cy, int(w), int(h))

    def serialize(self) -> str:
        return (f"{self.fx:.9g} {self.fy:.9g} {self.cx:.9g} {self.cy:.9g} "
                f"{self.width} {self.height}")


class PoseSE3:
    """Rigid transform: x' = R x + t, rotation orthonormal with det +1."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: np.ndarray, translation: np.ndarray,
                 check: bool = True):
        rotation = np.asarray(rotation, dtype=np.float64)
        translation = np.asarray(translation, dtype=np.float64).reshape(3)
        if check:
            err = np.abs(rotation.T @ rotation - np.eye(3)).max()
            if err > 1e-6 or abs(np.linalg.det(rotation) - 1.0) > 1e-6:
                raise ValueError("rotation is not orthonormal with det 1")
        self.rotation = rotation
        self.translation = translation

    @staticmethod
    def identity() -> "PoseSE3":
        return PoseSE3(np.eye(3), np.zeros(3), check=False)

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        """self * other, i.e. apply ``other`` first."""
        return PoseSE3(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation,
                       check=False)

    def inverse(self) -> "PoseSE3":
        rt = self.rotation.T
        return PoseSE3(rt, -rt @ self.translation, check=False)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray, check: bool = True) -> "PoseSE3":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        return PoseSE3(m[:3, :3], m[:3, 3], check=check)

    def allclose(self, other: "PoseSE3", atol: float = 1e-9) -> bool:
        return (np.allclose(self.rotation, other.rotation, atol=atol)
                and np.allclose(self.translation, other.translation, atol=atol))

    def __repr__(self):
        return f"PoseSE3(t={self.translation})"


def relative_pose(ref_c2w: PoseSE3, src_c2w: PoseSE3) -> PoseSE3:
    """Reference-camera -> source-camera transform from camera-to-world poses."""
    return src_c2w.inverse().compose(ref_c2w)


def geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle in radians of the relative rotation between two matrices."""
    c = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def axis_angle_to_rotation(v: np.ndarray) -> np.ndarray:
    """Rodrigues formula; near-zero vectors return the identity."""
    v = np.asarray(v, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(v)
    if theta < 1e-8:
        return np.eye(3)
    k = v / theta
    kx = np.array([[0, -k[2], k[1]],
                   [k[2], 0, -k[0]],
                   [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def rotation_to_axis_angle(r: np.ndarray) -> np.ndarray:
    """Inverse of the Rodrigues map for angles in [0, pi)."""
    r = np.asarray(r, dtype=np.float64)
    c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    if theta < 1e-8:
        return np.zeros(3)
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    axis = axis / (2.0 * np.sin(theta))
    return axis * theta


def rectify_pose(delta: PoseSE3, pose: PoseSE3) -> PoseSE3:
    """Left-composed correction: the residual is applied after the pose."""
    return delta.compose(pose)


def inject_pose_noise(pose: PoseSE3, sigma_rot: float,
                      seed: Union[int, np.random.Generator]) -> PoseSE3:
    """Left-multiply a random rotation with Gaussian-drawn angle (radians)."""
    if sigma_rot < 0:
        raise ValueError("sigma_rot must be nonnegative")
    if sigma_rot == 0:
        return pose
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    angle = rng.normal(0.0, sigma_rot)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    noise = PoseSE3(axis_angle_to_rotation(axis * angle), np.zeros(3),
                    check=False)
    return noise.compose(pose)


class DepthBins:
    """Depth hypotheses uniformly spaced in inverse depth.

    Index 0 is the far plane (d_max) and index M-1 the near plane (d_min),
    so larger indices mean closer geometry.
    """

    __slots__ = ("values", "d_min", "d_max")

    def __init__(self, values: np.ndarray, d_min: float, d_max: float):
        self.values = np.asarray(values, dtype=np.float64)
        self.d_min = d_min
        self.d_max = d_max

    def __len__(self):
        return len(self.values)

    def interp(self, index: np.ndarray) -> np.ndarray:
        """Linear interpolation of bin depths at real-valued indices."""
        idx = np.clip(index, 0, len(self.values) - 1)
        lo = np.floor(idx).astype(np.int64)
        hi = np.minimum(lo + 1, len(self.values) - 1)
        f = idx - lo
        return (1 - f) * self.values[lo] + f * self.values[hi]


def make_depth_bins(d_min: float, d_max: float, m: int) -> DepthBins:
    if not (0 < d_min < d_max):
        raise ValueError(f"need 0 < d_min < d_max, got ({d_min}, {d_max})")
    if m < 2:
        raise ValueError(f"need at least 2 hypotheses, got {m}")
    i = np.arange(m, dtype=np.float64)
    inv = 1.0 / d_max + (i / (m - 1)) * (1.0 / d_min - 1.0 / d_max)
    return DepthBins(1.0 / inv, d_min, d_max)


def pixel_grid(height: int, width: int) -> np.ndarray:
    """Homogeneous pixel coordinates (H, W, 3) with u along the width."""
    u, v = np.meshgrid(np.arange(width, dtype=np.float64),
                       np.arange(height, dtype=np.float64), indexing="xy")
    return np.stack([u, v, np.ones_like(u)], axis=-1)


# coordinates this far outside any image guarantee a masked sample downstream
_INVALID_COORD = -1e6


def warp_grid(k_ref: CameraIntrinsics, k_src: CameraIntrinsics,
              pose: PoseSE3, depth: Union[float, np.ndarray]) -> np.ndarray:
    """Source-pixel coordinates for every reference pixel at a given depth.

    ``depth`` is either a scalar hypothesis or a per-pixel (H, W) map in the
    reference frame.  Pixels that land behind the source camera are assigned
    far out-of-bounds coordinates so sampling masks them.
    """
    h, w = k_ref.height, k_ref.width
    if np.isscalar(depth):
        if depth <= 0:
            raise ValueError("depth hypothesis must be positive")
        depth = np.full((h, w), float(depth))
    else:
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != (h, w):
            raise ValueError(f"depth map shape {depth.shape} != ({h}, {w})")

    grid = pixel_grid(h, w)
    rays = np.empty_like(grid)
    rays[..., 0] = (grid[..., 0] - k_ref.cx) / k_ref.fx
    rays[..., 1] = (grid[..., 1] - k_ref.cy) / k_ref.fy
    rays[..., 2] = 1.0
    points = rays * depth[..., None]
    cam = points @ pose.rotation.T + pose.translation

    z = cam[..., 2]
    safe_z = np.where(z > 1e-12, z, 1.0)
    u = k_src.fx * cam[..., 0] / safe_z + k_src.cx
    v = k_src.fy * cam[..., 1] / safe_z + k_src.cy
    # snap coordinates a rounding error away from the source borders so the
    # identity warp stays the identity map at image edges
    for coord, last in ((u, k_src.width - 1), (v, k_src.height - 1)):
        np.copyto(coord, 0.0, where=np.abs(coord) < 1e-6)
        np.copyto(coord, float(last), where=np.abs(coord - last) < 1e-6)
    bad = z <= 1e-12
    u = np.where(bad, _INVALID_COORD, u)
    v = np.where(bad, _INVALID_COORD, v)
    return np.stack([u, v], axis=-1)


def load_pose_file(path) -> PoseSE3:
    """16 whitespace-separated reals, row-major 4x4 camera-to-world."""
    text = open(path).read().split()
    if len(text) != 16:
        raise ValueError(f"pose file {path} has {len(text)} values, wanted 16")
    m = np.array([float(t) for t in text]).reshape(4, 4)
    return PoseSE3.from_matrix(m)


def save_pose_file(path, pose: PoseSE3) -> None:
    with open(path, "w") as f:
        for row in pose.matrix:
            f.write(" ".join(f"{x:.12g}" for x in row) + "\n")


def load_intrinsics_file(path) -> CameraIntrinsics:
    return CameraIntrinsics.parse(open(path).read().strip())


def save_intrinsics_file(path, k: CameraIntrinsics) -> None:
    with open(path, "w") as f:
        f.write(k.serialize() + "\n")
