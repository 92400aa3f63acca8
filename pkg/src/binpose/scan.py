"""Structured point clouds, channel normalization and cutout augmentation.

A cloud is an ``(height, width, 3)`` grid of xyz points in meters. Missing
measurements are stored as all-NaN triples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoValidPixels
from .rng import make_rng

STD_FLOOR = 1e-6
ASPECT_RANGE = (0.5, 2.0)


@dataclass(frozen=True, eq=False)
class StructuredPointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.ndim != 3 or pts.shape[2] != 3 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"expected an (H, W, 3) grid, got {pts.shape}")
        if not np.issubdtype(pts.dtype, np.floating):
            pts = pts.astype(float)
        # a pixel is either fully valid or fully NaN
        bad = np.isnan(pts).any(axis=2)
        if bad.any() and not np.isnan(pts[bad]).all():
            pts = pts.copy()
            pts[bad] = np.nan
        if np.isinf(pts).any():
            raise ValueError("point cloud contains infinite values")
        object.__setattr__(self, "points", pts)

    @classmethod
    def empty(cls, height: int, width: int, dtype=np.float64) -> "StructuredPointCloud":
        return cls(np.full((height, width, 3), np.nan, dtype=dtype))

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.points[..., 0])

    def valid_points(self) -> np.ndarray:
        return self.points[self.valid]

    def __eq__(self, other):
        if not isinstance(other, StructuredPointCloud):
            return NotImplemented
        return (
            self.points.dtype == other.points.dtype
            and self.points.shape == other.points.shape
            and self.points.tobytes() == other.points.tobytes()
        )


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelStats":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), int(d["count"]))


@dataclass(frozen=True)
class CutoutConfig:
    c_p: float = 0.5
    c_min: float = 0.2
    c_max: float = 0.8

    def __post_init__(self):
        for name in ("c_p", "c_min", "c_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.c_min > self.c_max:
            raise ValueError("c_min must not exceed c_max")


def compute_channel_stats(clouds: Sequence[StructuredPointCloud]) -> ChannelStats:
    """Per-channel mean and population standard deviation over valid pixels."""
    n = 0
    total = np.zeros(3)
    for c in clouds:
        v = c.valid_points().astype(np.float64)
        n += len(v)
        total += v.sum(axis=0)
    if n == 0:
        raise NoValidPixels("no valid pixels in the given clouds")
    mean = total / n
    sq = np.zeros(3)
    for c in clouds:
        v = c.valid_points().astype(np.float64)
        sq += ((v - mean) ** 2).sum(axis=0)
    std = np.maximum(np.sqrt(sq / n), STD_FLOOR)
    return ChannelStats(mean, std, n)


def normalize(cloud: StructuredPointCloud, stats: ChannelStats | None = None) -> StructuredPointCloud:
    """Standardize each channel; per-sample statistics are used when ``stats`` is None."""
    if stats is None:
        stats = compute_channel_stats([cloud])
    return StructuredPointCloud((cloud.points.astype(np.float64) - stats.mean) / stats.std)


def denormalize(cloud: StructuredPointCloud, stats: ChannelStats) -> StructuredPointCloud:
    return StructuredPointCloud(cloud.points.astype(np.float64) * stats.std + stats.mean)


@dataclass(frozen=True)
class CutoutRegion:
    row: int
    col: int
    height: int
    width: int

    @property
    def area(self) -> int:
        return self.height * self.width


def draw_cutout(
    height: int, width: int, cfg: CutoutConfig, seed: int, aspect: float | None = None
) -> CutoutRegion | None:
    """Decide whether to apply a cutout and where; ``None`` means no cutout.

    The target area fraction is uniform in ``[c_min, c_max]`` and the aspect
    ratio uniform in ``[0.5, 2]`` unless ``aspect`` pins it. Side lengths are
    floored and clipped to the grid; placement is uniform over all positions
    that keep the rectangle inside.
    """
    rng = make_rng(seed, "cutout")
    if rng.random() >= cfg.c_p:
        return None
    f = rng.uniform(cfg.c_min, cfg.c_max)
    r = rng.uniform(*ASPECT_RANGE)
    if aspect is not None:
        r = float(aspect)
    area = f * width * height
    w = min(width, int(np.floor(np.sqrt(area * r))))
    h = min(height, int(np.floor(np.sqrt(area / r))))
    row = int(rng.integers(0, height - h + 1))
    col = int(rng.integers(0, width - w + 1))
    return CutoutRegion(row, col, h, w)


def cutout(
    cloud: StructuredPointCloud, cfg: CutoutConfig, seed: int, aspect: float | None = None
) -> StructuredPointCloud:
    region = draw_cutout(cloud.height, cloud.width, cfg, seed, aspect)
    if region is None or region.area == 0:
        return cloud
    pts = cloud.points.copy()
    pts[region.row : region.row + region.height, region.col : region.col + region.width] = np.nan
    return StructuredPointCloud(pts)
