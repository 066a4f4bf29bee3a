"""Synthetic posed scenes with analytic ground truth, dataset-directory
ingestion, and image / depth file I/O.

Directory layout:
    scene/intrinsics.txt          one line "fx fy cx cy width height"
    scene/frames/%06d.png         8-bit RGB
    scene/depth/%06d.png          16-bit grayscale, millimeters, 0 = invalid
    scene/poses/%06d.txt          4x4 row-major camera-to-world, meters
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from . import geometry as geo

_NOISE_PERIOD = 256


@dataclass
class SceneSample:
    """One reference view with sources, calibration, and ground truth."""

    ref_image: np.ndarray                 # (H, W, 3) float32 in [0, 1]
    src_images: List[np.ndarray]
    intrinsics: geo.CameraIntrinsics      # shared across views
    poses_c2w: List[geo.PoseSE3]          # reference first, then sources
    gt_depth: np.ndarray                  # (H, W) meters, 0 = invalid
    name: str = "sample"

    def __post_init__(self):
        if len(self.src_images) < 1:
            raise ValueError("a sample needs at least one source view")
        if len(self.poses_c2w) != 1 + len(self.src_images):
            raise ValueError("pose count must match view count")
        if np.any(self.gt_depth < 0):
            raise ValueError("ground-truth depth must be nonnegative")

    @property
    def n_views(self) -> int:
        return 1 + len(self.src_images)

    def relative_poses(self) -> List[geo.PoseSE3]:
        """Reference-to-source transforms, one per source view."""
        ref = self.poses_c2w[0]
        return [geo.relative_pose(ref, src) for src in self.poses_c2w[1:]]


@dataclass
class SceneSpec:
    """Procedural description of a planar test scene."""

    width: int = 64
    height: int = 64
    n_views: int = 3
    plane_depths: Tuple[float, ...] = (2.0,)
    near_plane_extent: float = 0.0        # world-x below this hits plane 2
    baseline: float = 0.15                # source camera offset, meters
    rotation_jitter: float = 0.0          # radians of per-view jitter
    focal_factor: float = 1.2             # focal length = factor * width
    texture_base_freq: float = 0.7        # lattice cells per world unit
    texture_octaves: int = 4
    texture_amplitudes: Tuple[float, ...] = (0.5, 0.3, 0.2, 0.12)
    d_min: float = 0.25
    d_max: float = 20.0
    seed: int = 0

    def validate(self):
        if self.width % 16 or self.height % 16:
            raise ValueError("image size must be divisible by 16")
        if self.n_views < 2:
            raise ValueError("need at least two views")
        if not self.plane_depths:
            raise ValueError("at least one plane required")
        for d in self.plane_depths:
            if not (self.d_min < d < self.d_max):
                raise ValueError(
                    f"plane depth {d} outside ({self.d_min}, {self.d_max})")
        if len(self.plane_depths) > 2:
            raise ValueError("at most two planes are supported")


class _ValueNoise:
    """Seeded multi-octave value noise over the plane, bilinear lattice."""

    def __init__(self, rng: np.random.Generator, base_freq: float,
                 octaves: int, amplitudes: Sequence[float]):
        self.lattices = [rng.random((_NOISE_PERIOD, _NOISE_PERIOD, 3))
                         for _ in range(octaves)]
        self.freqs = [base_freq * 2 ** k for k in range(octaves)]
        self.amps = list(amplitudes)[:octaves]

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        total = np.zeros(x.shape + (3,))
        for lattice, freq, amp in zip(self.lattices, self.freqs, self.amps):
            u = (x * freq) % _NOISE_PERIOD
            v = (y * freq) % _NOISE_PERIOD
            u0 = np.floor(u).astype(np.int64) % _NOISE_PERIOD
            v0 = np.floor(v).astype(np.int64) % _NOISE_PERIOD
            u1 = (u0 + 1) % _NOISE_PERIOD
            v1 = (v0 + 1) % _NOISE_PERIOD
            fu = (u - np.floor(u))[..., None]
            fv = (v - np.floor(v))[..., None]
            val = (lattice[v0, u0] * (1 - fu) * (1 - fv)
                   + lattice[v0, u1] * fu * (1 - fv)
                   + lattice[v1, u0] * (1 - fu) * fv
                   + lattice[v1, u1] * fu * fv)
            total += amp * val
        norm = sum(self.amps)
        return 0.15 + 0.7 * total / norm   # keep colors inside [0.15, 0.85]


def _source_offsets(n_sources: int, baseline: float) -> List[np.ndarray]:
    """Alternating lateral offsets with a small vertical component."""
    offsets = []
    for k in range(n_sources):
        side = 1 if k % 2 == 0 else -1
        mag = baseline * (1 + k // 2)
        offsets.append(np.array([side * mag, 0.25 * baseline * side, 0.0]))
    return offsets


def _scene_intrinsics(spec: SceneSpec) -> geo.CameraIntrinsics:
    f = spec.focal_factor * spec.width
    return geo.CameraIntrinsics(f, f, spec.width / 2.0, spec.height / 2.0,
                                spec.width, spec.height)


def _jittered_pose(rng, translation, jitter) -> geo.PoseSE3:
    if jitter > 0:
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        angle = rng.normal(0.0, jitter)
        rot = geo.axis_angle_to_rotation(axis * angle)
    else:
        rot = np.eye(3)
    return geo.PoseSE3(rot, translation, check=False)


def _make_renderer(spec: SceneSpec, rng: np.random.Generator,
                   intr: geo.CameraIntrinsics):
    """Exact ray-plane renderer: returns (color, depth) per camera pose."""
    textures = [_ValueNoise(rng, spec.texture_base_freq, spec.texture_octaves,
                            spec.texture_amplitudes)
                for _ in spec.plane_depths]
    rays = geo.pixel_grid(spec.height, spec.width)
    rays[..., 0] = (rays[..., 0] - intr.cx) / intr.fx
    rays[..., 1] = (rays[..., 1] - intr.cy) / intr.fy

    def render(pose: geo.PoseSE3):
        origin = pose.translation
        dirs = rays @ pose.rotation.T
        dz = dirs[..., 2]
        depth = None
        chosen = None
        for idx, plane_z in enumerate(spec.plane_depths):
            lam = (plane_z - origin[2]) / dz
            hit = lam > 0
            if idx == 1:
                points = origin + lam[..., None] * dirs
                hit &= points[..., 0] < spec.near_plane_extent
            if depth is None:
                depth = np.where(hit, lam, np.inf)
                chosen = np.zeros(lam.shape, dtype=np.int64)
            else:
                closer = hit & (lam < depth)
                depth = np.where(closer, lam, depth)
                chosen = np.where(closer, idx, chosen)
        points = origin + depth[..., None] * dirs
        color = np.zeros(depth.shape + (3,))
        for idx in range(len(spec.plane_depths)):
            sel = chosen == idx
            color[sel] = textures[idx](points[..., 0][sel],
                                       points[..., 1][sel])
        return color.astype(np.float32), depth

    return render


def generate_planar_scene(spec: SceneSpec) -> SceneSample:
    """Render a textured plane (or two, with an occlusion edge) in N views.

    All geometry is exact: colors come from a continuous procedural texture
    evaluated at the analytic ray-plane intersection, and the ground-truth
    depth of the reference view is the intersection depth itself.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    intr = _scene_intrinsics(spec)
    render = _make_renderer(spec, rng, intr)

    poses = [geo.PoseSE3.identity()]
    for off in _source_offsets(spec.n_views - 1, spec.baseline):
        poses.append(_jittered_pose(rng, off, spec.rotation_jitter))

    ref_color, ref_depth = render(poses[0])
    src_images = [render(p)[0] for p in poses[1:]]
    return SceneSample(ref_image=ref_color, src_images=src_images,
                       intrinsics=intr, poses_c2w=poses,
                       gt_depth=ref_depth.astype(np.float32),
                       name=f"synthetic-{spec.seed}")


def generate_planar_sequence(spec: SceneSpec, n_frames: int):
    """A smooth camera track over the same planar scene, for scene dirs.

    Cameras slide laterally in equal steps of the spec baseline (centered
    on the origin); returns ([(image, depth, pose)...], intrinsics).
    """
    spec.validate()
    if n_frames < 1:
        raise ValueError("need at least one frame")
    rng = np.random.default_rng(spec.seed)
    intr = _scene_intrinsics(spec)
    render = _make_renderer(spec, rng, intr)
    frames = []
    for i in range(n_frames):
        shift = (i - (n_frames - 1) / 2.0) * spec.baseline
        pose = _jittered_pose(rng, np.array([shift, 0.0, 0.0]),
                              spec.rotation_jitter)
        color, depth = render(pose)
        frames.append((color, depth.astype(np.float32), pose))
    return frames, intr


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_image_png(path, image: np.ndarray) -> None:
    """8-bit RGB from a float image in [0, 1]."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8), "RGB").save(path)

def read_image_png(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def write_depth_png(path, depth_m: np.ndarray) -> None:
    """16-bit grayscale PNG in millimeters; 0 marks invalid pixels.

    Quantization is round-half-even at 1 mm.
    """
    mm = np.round(np.asarray(depth_m, dtype=np.float64) * 1000.0)
    mm = np.clip(mm, 0, np.iinfo(np.uint16).max).astype(np.uint16)
    Image.fromarray(mm).save(path)


def read_depth_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode not in ("I;16", "I", "L"):
        raise ValueError(f"{path}: unsupported depth PNG mode {img.mode}")
    mm = np.asarray(img, dtype=np.uint32)
    if mm.dtype.itemsize > 4 or mm.max() > np.iinfo(np.uint16).max:
        raise ValueError(f"{path}: depth PNG exceeds 16-bit range")
    return (mm.astype(np.float64) / 1000.0).astype(np.float32)


def write_pfm(path, data: np.ndarray) -> None:
    """Single-channel PFM, little-endian, rows stored bottom-to-top."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("PFM writer expects a 2D map")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(arr).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM (header {tag!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise ValueError(f"{path}: malformed PFM dimensions line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        if scale >= 0:
            raise ValueError(f"{path}: expected little-endian PFM (scale < 0)")
        payload = f.read(width * height * 4)
        if len(payload) != width * height * 4:
            raise ValueError(f"{path}: truncated PFM payload")
    arr = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    return np.flipud(arr).copy()


def depth_preview(depth: np.ndarray, d_min: float, d_max: float) -> np.ndarray:
    """Color-mapped uint8 preview of a depth map (near = warm, far = cool)."""
    t = np.clip((1.0 / np.maximum(depth, 1e-6) - 1.0 / d_max)
                / (1.0 / d_min - 1.0 / d_max), 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4.0 * t - 3.0), 0, 1)
    g = np.clip(1.5 - np.abs(4.0 * t - 2.0), 0, 1)
    b = np.clip(1.5 - np.abs(4.0 * t - 1.0), 0, 1)
    rgb = np.stack([r, g, b], axis=-1)
    rgb[depth <= 0] = 0
    return (rgb * 255).round().astype(np.uint8)


# ---------------------------------------------------------------------------
# scene directories
# ---------------------------------------------------------------------------

def write_scene_directory(path, samples_or_frames, intrinsics=None) -> None:
    """Write a frame sequence to the documented layout.

    Accepts a list of (image, depth, pose) triples plus shared intrinsics.
    """
    frames = samples_or_frames
    os.makedirs(os.path.join(path, "frames"), exist_ok=True)
    os.makedirs(os.path.join(path, "depth"), exist_ok=True)
    os.makedirs(os.path.join(path, "poses"), exist_ok=True)
    geo.save_intrinsics_file(os.path.join(path, "intrinsics.txt"), intrinsics)
    for i, (image, depth, pose) in enumerate(frames):
        write_image_png(os.path.join(path, "frames", f"{i:06d}.png"), image)
        write_depth_png(os.path.join(path, "depth", f"{i:06d}.png"), depth)
        geo.save_pose_file(os.path.join(path, "poses", f"{i:06d}.txt"), pose)


def _frame_ids(path) -> List[int]:
    frame_dir = os.path.join(path, "frames")
    if not os.path.isdir(frame_dir):
        raise FileNotFoundError(f"no frames directory under {path}")
    ids = []
    for name in sorted(os.listdir(frame_dir)):
        m = re.fullmatch(r"(\d{6})\.png", name)
        if m:
            ids.append(int(m.group(1)))
    if not ids:
        raise FileNotFoundError(f"no frames found under {frame_dir}")
    return ids


def load_scene_directory(path, sample_stride: int = 10,
                         n_views: int = 3) -> List[SceneSample]:
    """Assemble samples by striding the frame sequence.

    Frames are taken every ``sample_stride``; each run of ``n_views``
    consecutive sampled frames becomes one sample with the middle frame as
    reference.  Depth value 0 is invalid.
    """
    if n_views < 2 or n_views % 2 == 0:
        raise ValueError("n_views must be an odd count >= 3 (middle = reference)")
    intr = geo.load_intrinsics_file(os.path.join(path, "intrinsics.txt"))
    ids = _frame_ids(path)
    sampled = ids[::sample_stride]
    half = n_views // 2

    def load_frame(fid: int):
        image = read_image_png(os.path.join(path, "frames", f"{fid:06d}.png"))
        pose = geo.load_pose_file(os.path.join(path, "poses", f"{fid:06d}.txt"))
        return image, pose

    samples = []
    for mid in range(half, len(sampled) - half):
        window = sampled[mid - half: mid + half + 1]
        ref_id = window[half]
        src_ids = [fid for fid in window if fid != ref_id]
        ref_image, ref_pose = load_frame(ref_id)
        gt = read_depth_png(os.path.join(path, "depth", f"{ref_id:06d}.png"))
        srcs, poses = [], [ref_pose]
        for fid in src_ids:
            img, pose = load_frame(fid)
            srcs.append(img)
            poses.append(pose)
        samples.append(SceneSample(ref_image=ref_image, src_images=srcs,
                                   intrinsics=intr, poses_c2w=poses,
                                   gt_depth=gt,
                                   name=f"{os.path.basename(str(path))}"
                                        f"-{ref_id:06d}"))
    if not samples:
        raise ValueError(
            f"{path}: {len(sampled)} sampled frames cannot form a "
            f"{n_views}-view sample")
    return samples
