"""Synthetic structured scans of open-top cuboid bins.

Scenes are built in a z-up world frame: a ground plane at ``z = 0``, one bin
(four walls and a bottom plate, each modelled as an oriented box) resting on
it, and a few low distractor boxes around it. A pinhole camera above the bin
is ray-cast per pixel; the nearest hit wins. Rendered points are reported in
world coordinates.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigInvalid
from .geometry import BinModel, LineSegment3, Pose, rot_z
from .rng import make_rng
from .scan import StructuredPointCloud

Range = tuple[float, float]


@dataclass(frozen=True)
class SceneConfig:
    image_width: int = 320
    image_height: int = 240
    focal_length_px: float = 300.0
    bin_width_range: Range = (0.30, 0.45)
    bin_length_range: Range = (0.50, 0.70)
    bin_height_range: Range = (0.15, 0.35)
    bin_tilt_range_deg: Range = (0.0, 10.0)
    bin_offset_max: float = 0.2
    wall_thickness: float = 0.02
    camera_height_range: Range = (1.2, 1.6)  # above the rim center
    camera_tilt_range_deg: Range = (0.0, 25.0)
    target_jitter: float = 0.05
    depth_noise_sigma: float = 0.001
    dropout_prob: float = 0.005
    distractor_count_range: tuple[int, int] = (0, 3)
    distractor_size_range: Range = (0.10, 0.25)
    distractor_height_range: Range = (0.06, 0.12)
    samples_per_scene: int = 5
    val_fraction: float = 0.1
    test_fraction: float = 0.1

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        self.validate()

    def validate(self) -> None:
        def fail(msg):
            raise ConfigInvalid(msg)

        if self.image_width < 1 or self.image_height < 1:
            fail("image dimensions must be positive")
        if not self.focal_length_px > 0:
            fail("focal length must be positive")
        for name in (
            "bin_width_range",
            "bin_length_range",
            "bin_height_range",
            "camera_height_range",
            "distractor_size_range",
            "distractor_height_range",
        ):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                fail(f"{name} must be a nonempty positive range, got {(lo, hi)}")
        for name in ("bin_tilt_range_deg", "camera_tilt_range_deg"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi < 60):
                fail(f"{name} must lie in [0, 60) degrees, got {(lo, hi)}")
        if self.bin_width_range[1] > self.bin_length_range[0]:
            fail("bin widths must not exceed bin lengths")
        if not 0 < self.wall_thickness < self.bin_width_range[0] / 2:
            fail("wall thickness must be positive and below half the bin width")
        if self.wall_thickness >= self.bin_height_range[0]:
            fail("wall thickness must be below the bin height")
        lo, hi = self.distractor_count_range
        if not 0 <= lo <= hi:
            fail("distractor count range invalid")
        if self.depth_noise_sigma < 0 or not 0 <= self.dropout_prob <= 1:
            fail("noise sigma must be >= 0 and dropout in [0, 1]")
        if self.bin_offset_max < 0 or self.target_jitter < 0:
            fail("offsets must be non-negative")
        if self.samples_per_scene < 1:
            fail("samples_per_scene must be >= 1")
        if not (0 <= self.val_fraction and 0 <= self.test_fraction and self.val_fraction + self.test_fraction < 1):
            fail("split fractions must be non-negative and sum below 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigInvalid(f"unknown scene config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            raise ConfigInvalid(str(e)) from e

    def replace(self, **changes) -> "SceneConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Box:
    """Oriented box: ``center`` in world, ``rotation`` columns are its axes."""

    center: np.ndarray
    rotation: np.ndarray
    half_extents: np.ndarray


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; ``rotation`` maps camera axes (x right, y down, z forward) to world."""

    position: np.ndarray
    rotation: np.ndarray
    width: int
    height: int
    focal: float

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit ray directions for every pixel, shape ``(H, W, 3)``, and the origin."""
        cx, cy = self.principal_point
        u, v = np.meshgrid(np.arange(self.width, dtype=float), np.arange(self.height, dtype=float))
        d_cam = np.stack([(u - cx) / self.focal, (v - cy) / self.focal, np.ones_like(u)], axis=-1)
        d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)
        return np.asarray(self.position, dtype=float), d_cam @ np.asarray(self.rotation).T

    @classmethod
    def look_at(cls, position, target, width, height, focal, yaw: float = 0.0) -> "Camera":
        """Camera at ``position`` facing ``target``; ``yaw`` spins the image about the view axis."""
        position = np.asarray(position, dtype=float)
        z = np.asarray(target, dtype=float) - position
        z /= np.linalg.norm(z)
        ref = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        x = ref - (ref @ z) * z
        if np.linalg.norm(x) < 1e-9:
            ref = np.array([-math.sin(yaw), math.cos(yaw), 0.0])
            x = ref - (ref @ z) * z
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return cls(position, np.column_stack([x, y, z]), int(width), int(height), float(focal))


@dataclass(frozen=True)
class SceneGeometry:
    boxes: list[Box] = field(default_factory=list)
    ground_z: float | None = 0.0


@dataclass
class ScanSample:
    cloud: StructuredPointCloud
    gt_pose: Pose
    gt_segments: list[LineSegment3]
    bin: BinModel
    scene_id: str
    sample_id: str
    params: dict = field(default_factory=dict)


def gt_top_segments(bin: BinModel, pose: Pose) -> list[LineSegment3]:
    """The four outer top-rim edges, long sides first in traversal order.

    Corners are visited counter-clockwise about the bin z axis starting at
    ``(-L/2, -W/2)``, so segments 0 and 2 are the length sides.
    """
    hl, hw, h = bin.length / 2.0, bin.width / 2.0, bin.height
    corners = np.array([[-hl, -hw, h], [hl, -hw, h], [hl, hw, h], [-hl, hw, h]])
    world = pose.apply(corners)
    return [LineSegment3(world[i], world[(i + 1) % 4], 1.0) for i in range(4)]


def bin_boxes(bin: BinModel, pose: Pose, wall: float) -> list[Box]:
    """Bottom plate and four walls of an open-top bin, in world coordinates."""
    hl, hw, h = bin.length / 2.0, bin.width / 2.0, bin.height
    local = [
        ((0.0, 0.0, wall / 2), (hl, hw, wall / 2)),
        ((0.0, -(hw - wall / 2), h / 2), (hl, wall / 2, h / 2)),
        ((0.0, hw - wall / 2, h / 2), (hl, wall / 2, h / 2)),
        ((-(hl - wall / 2), 0.0, h / 2), (wall / 2, hw - wall, h / 2)),
        ((hl - wall / 2, 0.0, h / 2), (wall / 2, hw - wall, h / 2)),
    ]
    R = pose.rotation
    return [
        Box(pose.apply(np.array(c)), R.copy(), np.array(e, dtype=float)) for c, e in local
    ]


def intersect_box(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Entry distance along each ray into ``box`` (slab test); ``inf`` on a miss.

    Rays starting inside the box are treated as misses.
    """
    o = (origin - box.center) @ box.rotation
    d = dirs @ box.rotation
    h = box.half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-h - o) / d
        t2 = (h - o) / d
    t_near = np.nanmax(np.fmin(t1, t2), axis=-1)
    t_far = np.nanmin(np.fmax(t1, t2), axis=-1)
    hit = (t_far >= t_near) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def intersect_ground(origin: np.ndarray, dirs: np.ndarray, z: float) -> np.ndarray:
    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (z - origin[2]) / dz
    return np.where((dz < 0) & (t > 0), t, np.inf)


def render_scan(
    geometry: SceneGeometry,
    camera: Camera,
    config: SceneConfig,
    seed: int,
) -> StructuredPointCloud:
    """Ray-cast ``geometry`` from ``camera``.

    Depth noise (Gaussian, ``config.depth_noise_sigma``) is applied along each
    ray and pixels are dropped with ``config.dropout_prob``. Output is float64.
    """
    origin, dirs = camera.rays()
    t = np.full(dirs.shape[:2], np.inf)
    if geometry.ground_z is not None:
        t = np.minimum(t, intersect_ground(origin, dirs, geometry.ground_z))
    for box in geometry.boxes:
        t = np.minimum(t, intersect_box(origin, dirs, box))

    rng = make_rng(seed, "render")
    noise = rng.standard_normal(t.shape) * config.depth_noise_sigma
    drop = rng.random(t.shape) < config.dropout_prob
    hit = np.isfinite(t) & ~drop
    t = np.where(hit, t + noise, np.nan)
    pts = origin + t[..., None] * dirs
    pts[~hit] = np.nan
    return StructuredPointCloud(pts)


def _axis_rotation(axis, angle) -> np.ndarray:
    k = np.asarray(axis, dtype=float)
    k /= np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def sample_bin(config: SceneConfig, rng: np.random.Generator) -> BinModel:
    width = rng.uniform(*config.bin_width_range)
    length = rng.uniform(*config.bin_length_range)
    height = rng.uniform(*config.bin_height_range)
    return BinModel(width, length, height)


def sample_bin_pose(config: SceneConfig, bin: BinModel, rng: np.random.Generator) -> tuple[Pose, float]:
    """Upright pose with free yaw and limited tilt, lowest bottom corner on the ground."""
    yaw = rng.uniform(-math.pi, math.pi)
    tilt = math.radians(rng.uniform(*config.bin_tilt_range_deg))
    tilt_axis_angle = rng.uniform(-math.pi, math.pi)
    axis = (math.cos(tilt_axis_angle), math.sin(tilt_axis_angle), 0.0)
    R = _axis_rotation(axis, tilt) @ rot_z(yaw)
    offset = rng.uniform(-config.bin_offset_max, config.bin_offset_max, size=2)
    hl, hw = bin.length / 2.0, bin.width / 2.0
    bottom = np.array([[sx * hl, sy * hw, 0.0] for sx in (-1, 1) for sy in (-1, 1)])
    lift = -float(np.min(bottom @ R.T, axis=0)[2])
    return Pose(R, np.array([offset[0], offset[1], lift])), math.degrees(tilt)


def sample_distractors(
    config: SceneConfig, bin: BinModel, pose: Pose, rng: np.random.Generator
) -> list[Box]:
    count = int(rng.integers(config.distractor_count_range[0], config.distractor_count_range[1] + 1))
    bin_radius = math.hypot(bin.length, bin.width) / 2.0
    boxes = []
    for _ in range(count):
        sx, sy = rng.uniform(*config.distractor_size_range, size=2)
        sz = rng.uniform(*config.distractor_height_range)
        radius = bin_radius + math.hypot(sx, sy) / 2.0 + 0.05 + rng.uniform(0.0, 0.3)
        angle = rng.uniform(-math.pi, math.pi)
        yaw = rng.uniform(-math.pi, math.pi)
        center = np.array(
            [
                pose.translation[0] + radius * math.cos(angle),
                pose.translation[1] + radius * math.sin(angle),
                sz / 2.0,
            ]
        )
        boxes.append(Box(center, rot_z(yaw), np.array([sx / 2, sy / 2, sz / 2])))
    return boxes


def sample_camera(config: SceneConfig, target, rng: np.random.Generator) -> tuple[Camera, dict]:
    height = rng.uniform(*config.camera_height_range)
    tilt = math.radians(rng.uniform(*config.camera_tilt_range_deg))
    azimuth = rng.uniform(-math.pi, math.pi)
    yaw = rng.uniform(-math.pi, math.pi)
    jitter = rng.uniform(-config.target_jitter, config.target_jitter, size=3)
    aim = np.asarray(target, dtype=float) + jitter
    horizontal = height * math.tan(tilt)
    position = aim + np.array(
        [horizontal * math.cos(azimuth), horizontal * math.sin(azimuth), height]
    )
    cam = Camera.look_at(
        position, aim, config.image_width, config.image_height, config.focal_length_px, yaw
    )
    return cam, {"camera_height": height, "camera_tilt_deg": math.degrees(tilt)}


def sample_geometry(
    config: SceneConfig, seed: int, bin: BinModel | None = None
) -> tuple[BinModel, Pose, SceneGeometry, Camera, dict]:
    """Draw everything about a scene except the rendering noise."""
    rng = make_rng(seed, "scene")
    drawn_bin = sample_bin(config, rng)
    bin = bin or drawn_bin
    pose, bin_tilt = sample_bin_pose(config, bin, rng)
    distractors = sample_distractors(config, bin, pose, rng)
    rim_center = pose.apply(np.array([0.0, 0.0, bin.height]))
    camera, cam_params = sample_camera(config, rim_center, rng)
    geometry = SceneGeometry(bin_boxes(bin, pose, config.wall_thickness) + distractors, 0.0)
    params = {
        "bin_width": bin.width,
        "bin_length": bin.length,
        "bin_height": bin.height,
        "bin_tilt_deg": bin_tilt,
        "distractor_count": len(distractors),
        **cam_params,
    }
    return bin, pose, geometry, camera, params


def sample_scene(
    config: SceneConfig,
    seed: int,
    bin: BinModel | None = None,
    scene_id: str = "scene-0000",
    sample_id: str | None = None,
) -> ScanSample:
    """Generate one sample; output is a pure function of ``(config, seed, bin)``.

    The rendered cloud is stored as float32, the precision of the scan file
    format, so writing and re-reading a sample is lossless.
    """
    config.validate()
    bin, pose, geometry, camera, params = sample_geometry(config, seed, bin)
    cloud = render_scan(geometry, camera, config, seed)
    cloud = StructuredPointCloud(cloud.points.astype(np.float32))
    return ScanSample(
        cloud=cloud,
        gt_pose=pose,
        gt_segments=gt_top_segments(bin, pose),
        bin=bin,
        scene_id=scene_id,
        sample_id=sample_id or f"seed-{seed}",
        params=params,
    )


def scene_splits(n_scenes: int, config: SceneConfig) -> list[str]:
    """Split tag of each scene: the last scenes go to test, the ones before to val."""
    n_test = int(round(config.test_fraction * n_scenes))
    n_val = int(round(config.val_fraction * n_scenes))
    if n_scenes >= 3:
        n_test = max(n_test, 1) if config.test_fraction > 0 else 0
        n_val = max(n_val, 1) if config.val_fraction > 0 else 0
    n_train = max(n_scenes - n_test - n_val, 0)
    n_val = min(n_val, n_scenes - n_train)
    n_test = n_scenes - n_train - n_val
    return ["train"] * n_train + ["val"] * n_val + ["test"] * n_test


@dataclass(frozen=True)
class SampleTask:
    index: int
    seed: int
    scene_index: int
    scene_id: str
    sample_id: str
    split: str
    bin: BinModel


def plan_dataset(config: SceneConfig, n_samples: int, seed: int) -> list[SampleTask]:
    """Lay out sample ids, scene grouping, splits and per-sample seeds.

    Every sample in a scene shares that scene's bin. Seeds depend only on
    ``(seed, index)`` so samples can be generated in any order.
    """
    n_scenes = max(1, math.ceil(n_samples / config.samples_per_scene)) if n_samples else 0
    splits = scene_splits(n_scenes, config)
    bins = [sample_bin(config, make_rng(seed, "scene-bin", s)) for s in range(n_scenes)]
    tasks = []
    for i in range(n_samples):
        s = i // config.samples_per_scene
        tasks.append(
            SampleTask(
                index=i,
                seed=int(make_rng(seed, "sample", i).integers(0, 2**63, dtype=np.int64)),
                scene_index=s,
                scene_id=f"scene-{s:04d}",
                sample_id=f"sample-{i:05d}",
                split=splits[s],
                bin=bins[s],
            )
        )
    return tasks


def generate_task(config: SceneConfig, task: SampleTask) -> ScanSample:
    return sample_scene(config, task.seed, task.bin, task.scene_id, task.sample_id)


def generate_dataset(config: SceneConfig, n_samples: int, seed: int) -> Iterator[tuple[ScanSample, str]]:
    for task in plan_dataset(config, n_samples, seed):
        yield generate_task(config, task), task.split
