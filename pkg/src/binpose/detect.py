"""Line segment detectors that feed :func:`binpose.geometry.estimate_pose`.

Two detectors share one output type, a list of :class:`LineSegment3`:

* :func:`oracle_detect` perturbs the ground-truth rim segments in a
  controlled way, for robustness studies of the pose regression alone.
* :func:`plane_rim_detect` works on the point cloud: it finds the elevated
  horizontal rim plane with RANSAC, projects its inliers into the plane and
  fits a minimum-area rectangle to their convex hull.

Any other detector (e.g. a trained network) plugs in by writing the same
segment format through :mod:`binpose.dataset_io`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateRim, NoPlaneFound
from .geometry import LineSegment3
from .rng import make_rng
from .scan import StructuredPointCloud


@dataclass(frozen=True)
class OracleNoiseConfig:
    sigma: float = 0.0
    drop_count: int = 0
    spurious_count: int = 0
    spurious_confidence: tuple[float, float] = (0.05, 0.5)
    confidence_scale: float = 0.05  # meters of mean endpoint displacement halving confidence
    seed_policy: str = "per-sample"  # or "shared": same stream for every sample

    def __post_init__(self):
        if self.sigma < 0 or self.drop_count < 0 or self.spurious_count < 0:
            raise ValueError("sigma and counts must be non-negative")
        lo, hi = self.spurious_confidence
        if not 0 <= lo <= hi <= 1:
            raise ValueError("spurious confidence range must lie in [0, 1]")
        if self.confidence_scale <= 0:
            raise ValueError("confidence_scale must be positive")
        if self.seed_policy not in ("per-sample", "shared"):
            raise ValueError(f"unknown seed policy {self.seed_policy!r}")


def oracle_detect(sample, cfg: OracleNoiseConfig, seed: int) -> list[LineSegment3]:
    """Ground-truth rim segments with endpoint noise, drops and spurious extras.

    A kept segment's confidence is ``1 / (1 + m / confidence_scale)`` where
    ``m`` is its mean endpoint displacement, so exact segments score 1.
    Spurious segments lie around the rim with confidence drawn uniformly from
    ``cfg.spurious_confidence``.
    """
    rng = make_rng(seed, "oracle")
    gts = list(sample.gt_segments)
    noise = rng.standard_normal((len(gts), 2, 3)) * cfg.sigma
    keep = np.ones(len(gts), dtype=bool)
    if cfg.drop_count:
        keep[rng.choice(len(gts), size=min(cfg.drop_count, len(gts)), replace=False)] = False

    out = []
    for k, s in enumerate(gts):
        if not keep[k]:
            continue
        disp = float(np.linalg.norm(noise[k], axis=1).mean())
        conf = 1.0 / (1.0 + disp / cfg.confidence_scale)
        out.append(LineSegment3(s.a + noise[k, 0], s.b + noise[k, 1], conf))

    if cfg.spurious_count:
        corners = np.array([p for s in gts for p in (s.a, s.b)])
        lo = corners.min(axis=0) - 0.1
        hi = corners.max(axis=0) + 0.1
        for _ in range(cfg.spurious_count):
            while True:
                a, b = rng.uniform(lo, hi, size=(2, 3))
                if np.linalg.norm(b - a) > 0.01:
                    break
            out.append(LineSegment3(a, b, rng.uniform(*cfg.spurious_confidence)))
    return out


# ---------------------------------------------------------------- 2D hull/rect


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Hull vertices in counter-clockwise order."""
    try:
        hull = ConvexHull(points)
    except QhullError as e:
        raise DegenerateRim(f"convex hull failed: {e}") from None
    return points[hull.vertices]


def min_area_rect(hull: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-area enclosing rectangle of a convex polygon.

    An optimal rectangle has one side collinear with a hull edge, so every
    edge orientation is tried (the rotating-calipers candidates) and the
    smallest box kept. Returns the four corners counter-clockwise and the area.
    """
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.linalg.norm(edges, axis=1)
    edges = edges[lengths > 0]
    ux = edges / np.linalg.norm(edges, axis=1, keepdims=True)
    uy = np.stack([-ux[:, 1], ux[:, 0]], axis=1)
    px = hull @ ux.T  # (n_points, n_edges)
    py = hull @ uy.T
    xmin, xmax = px.min(axis=0), px.max(axis=0)
    ymin, ymax = py.min(axis=0), py.max(axis=0)
    areas = (xmax - xmin) * (ymax - ymin)
    k = int(np.argmin(areas))
    box = [(xmin[k], ymin[k]), (xmax[k], ymin[k]), (xmax[k], ymax[k]), (xmin[k], ymax[k])]
    corners = np.array([x * ux[k] + y * uy[k] for x, y in box])
    return corners, float(areas[k])


def rect_area_at_angle(points: np.ndarray, angle: float) -> float:
    """Area of the enclosing rectangle with sides at ``angle``; used for checks."""
    c, s = math.cos(angle), math.sin(angle)
    x = points @ np.array([c, s])
    y = points @ np.array([-s, c])
    return float((x.max() - x.min()) * (y.max() - y.min()))


# -------------------------------------------------------------- rim detector


@dataclass(frozen=True)
class RimDetectorConfig:
    ransac_iterations: int = 300
    inlier_threshold: float = 0.005
    min_inliers: int = 50
    max_planes: int = 6
    max_normal_tilt_deg: float = 30.0
    normal_step: int = 1
    ground_bin_width: float = 0.01
    ground_margin: float = 0.05
    min_hull_area: float = 0.01
    rect_method: str = "min-area"  # "sequential-lines" is reserved, not implemented

    def __post_init__(self):
        if self.ransac_iterations < 1 or self.min_inliers < 3 or self.max_planes < 1:
            raise ValueError("iteration and inlier counts must be positive")
        for name in ("inlier_threshold", "ground_bin_width", "ground_margin", "min_hull_area"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rect_method not in ("min-area", "sequential-lines"):
            raise ValueError(f"unknown rectangle fit {self.rect_method!r}")


@dataclass(frozen=True)
class PlaneFit:
    normal: np.ndarray
    point: np.ndarray
    inliers: np.ndarray  # indices into the candidate array


def pixel_normals(cloud: StructuredPointCloud, step: int = 1) -> np.ndarray:
    """Per-pixel unit normals from central differences on the organized grid.

    Pixels whose stencil touches an invalid or out-of-grid neighbour get NaN.
    The sign is chosen so that normals point up (non-negative z).
    """
    P = cloud.points.astype(np.float64)
    H, W, _ = P.shape
    out = np.full((H, W, 3), np.nan)
    if H <= 2 * step or W <= 2 * step:
        return out
    dx = P[step:-step, 2 * step :] - P[step:-step, : -2 * step]
    dy = P[2 * step :, step:-step] - P[: -2 * step, step:-step]
    n = np.cross(dx, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
    n = np.where(n[..., 2:3] < 0, -n, n)
    out[step:-step, step:-step] = n
    return out


def ground_height(z: np.ndarray, bin_width: float) -> float:
    """Height of the dominant support plane: the mode of the z histogram."""
    lo, hi = float(z.min()), float(z.max())
    n_bins = max(1, int(math.ceil((hi - lo) / bin_width)))
    counts, edges = np.histogram(z, bins=n_bins, range=(lo, lo + n_bins * bin_width))
    k = int(np.argmax(counts))
    near = z[(z >= edges[k]) & (z <= edges[k + 1])]
    return float(np.median(near))


def _refine_plane(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    n = vt[-1]
    return (n if n[2] >= 0 else -n), centroid


def ransac_horizontal_plane(
    points: np.ndarray, cfg: RimDetectorConfig, rng: np.random.Generator
) -> PlaneFit | None:
    """Best near-horizontal plane by inlier count, refined by least squares."""
    n = len(points)
    if n < cfg.min_inliers:
        return None
    min_nz = math.cos(math.radians(cfg.max_normal_tilt_deg))
    idx = rng.integers(0, n, size=(cfg.ransac_iterations, 3))
    p0, p1, p2 = points[idx[:, 0]], points[idx[:, 1]], points[idx[:, 2]]
    normals = np.cross(p1 - p0, p2 - p0)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    normals[ok] /= norms[ok, None]
    ok &= np.abs(normals[:, 2]) >= min_nz
    best_count, best = 0, None
    for start in range(0, cfg.ransac_iterations, 64):
        sl = np.arange(start, min(start + 64, cfg.ransac_iterations))
        sl = sl[ok[sl]]
        if len(sl) == 0:
            continue
        offsets = np.einsum("mk,mk->m", p0[sl], normals[sl])
        dist = np.abs(normals[sl] @ points.T - offsets[:, None])
        counts = (dist < cfg.inlier_threshold).sum(axis=1)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count, best = int(counts[k]), sl[k]
    if best is None or best_count < cfg.min_inliers:
        return None
    inl = np.flatnonzero(np.abs((points - p0[best]) @ normals[best]) < cfg.inlier_threshold)
    normal, centroid = _refine_plane(points[inl])
    for _ in range(2):
        inl = np.flatnonzero(np.abs((points - centroid) @ normal) < cfg.inlier_threshold)
        if len(inl) < cfg.min_inliers:
            return None
        normal, centroid = _refine_plane(points[inl])
    if normal[2] < min_nz:
        return None
    return PlaneFit(normal, centroid, inl)


def _largest_component(pixel_ids: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Mask selecting the pixels of the largest 8-connected image region."""
    img = np.zeros(shape, dtype=bool)
    img.flat[pixel_ids] = True
    labels, n = ndimage.label(img, structure=np.ones((3, 3), dtype=int))
    if n <= 1:
        return np.ones(len(pixel_ids), dtype=bool)
    lab = labels.flat[pixel_ids]
    sizes = np.bincount(lab, minlength=n + 1)
    sizes[0] = 0
    return lab == int(np.argmax(sizes))


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ normal) * normal
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(normal, e1)


def plane_rim_detect(
    cloud: StructuredPointCloud, cfg: RimDetectorConfig | None = None, seed: int = 0
) -> list[LineSegment3]:
    """Detect the four top-rim edges of a bin in a structured scan.

    Points above the ground plane (found as the z-histogram mode) are
    searched for near-horizontal planes with sequential RANSAC, using only
    pixels whose grid normal is itself near vertical. Each plane keeps the
    largest 8-connected image region of its inliers. Of the candidates, the
    one whose in-plane convex hull encloses the largest minimum-area
    rectangle is taken as the rim; the rectangle edges are
    lifted back to 3D. All four segments carry the plane's inlier ratio
    (inliers over valid points) as confidence.
    """
    cfg = cfg or RimDetectorConfig()
    if cfg.rect_method != "min-area":
        raise NotImplementedError(f"rectangle fit {cfg.rect_method!r} is not available")
    valid = cloud.valid
    pts = cloud.points[valid].astype(np.float64)
    if len(pts) < cfg.min_inliers:
        raise NoPlaneFound(f"only {len(pts)} valid points")
    pixel_ids = np.flatnonzero(valid.ravel())
    ground = ground_height(pts[:, 2], cfg.ground_bin_width)
    elevated = pts[:, 2] > ground + cfg.ground_margin
    normals_z = pixel_normals(cloud, cfg.normal_step)[valid][:, 2]
    with np.errstate(invalid="ignore"):
        flat = normals_z >= math.cos(math.radians(cfg.max_normal_tilt_deg))
    cand, cand_ids = pts[elevated], pixel_ids[elevated]
    remaining, remaining_ids = pts[elevated & flat], pixel_ids[elevated & flat]
    rng = make_rng(seed, "rim-ransac")

    best = None
    for _ in range(cfg.max_planes):
        plane = ransac_horizontal_plane(remaining, cfg, rng)
        if plane is None:
            break
        mask = np.ones(len(remaining), dtype=bool)
        mask[plane.inliers] = False
        remaining, remaining_ids = remaining[mask], remaining_ids[mask]
        # support includes pixels with mixed normals at the rim edges, which
        # keeps a thin rim band connected and its outer boundary intact
        on_plane = np.abs((cand - plane.point) @ plane.normal) < cfg.inlier_threshold
        member = _largest_component(cand_ids[on_plane], cloud.points.shape[:2])
        inliers = cand[on_plane][member]
        if len(inliers) < cfg.min_inliers:
            continue
        e1, e2 = _plane_basis(plane.normal)
        rel = inliers - plane.point
        uv = np.stack([rel @ e1, rel @ e2], axis=1)
        try:
            corners, area = min_area_rect(convex_hull_2d(uv))
        except DegenerateRim:
            continue
        if best is None or area > best[0]:
            best = (area, corners, plane.normal, plane.point, e1, e2, len(inliers))

    if best is None:
        raise NoPlaneFound("no elevated horizontal plane with enough inliers")
    area, corners, normal, centroid, e1, e2, n_inl = best
    if area < cfg.min_hull_area:
        raise DegenerateRim(f"rim rectangle area {area:.4g} m^2 below threshold")
    conf = min(1.0, n_inl / len(pts))
    world = centroid + corners[:, :1] * e1 + corners[:, 1:] * e2
    return [LineSegment3(world[i], world[(i + 1) % 4], conf) for i in range(4)]
