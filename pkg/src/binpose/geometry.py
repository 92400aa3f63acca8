"""Bin pose regression from four detected top-rim line segments.

The bin frame has its origin at the center of the bottom face, z pointing up
through the open top and x along the longer side. Given four segments lying on
the top rim, the rotation comes from a least-squares plane normal and the
fused direction of the two longest segments, and the translation from the
four rim corners shifted down by the bin height.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AmbiguousOrientation,
    DegenerateGeometry,
    InvalidRotation,
    ParallelVectors,
    TooFewPoints,
    WrongSegmentCount,
    ZeroDirection,
)

ROTATION_TOL = 1e-9
RANK_TOL = 1e-12
FLIP_TOL = 1e-9
PARALLEL_TOL = 1e-9
ZERO_DIR_TOL = 1e-12
MIN_SEGMENT_LENGTH = 1e-9


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


@dataclass(frozen=True)
class LineSegment3:
    """A 3D segment with unordered endpoints and a detection confidence."""

    a: np.ndarray
    b: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", _vec3(self.a))
        object.__setattr__(self, "b", _vec3(self.b))
        object.__setattr__(self, "confidence", float(self.confidence))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if np.linalg.norm(self.b - self.a) <= MIN_SEGMENT_LENGTH:
            raise ValueError("segment endpoints coincide")

    @property
    def direction(self) -> np.ndarray:
        return self.b - self.a

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    def reversed(self) -> "LineSegment3":
        return LineSegment3(self.b, self.a, self.confidence)

    def transformed(self, rotation, translation) -> "LineSegment3":
        R = np.asarray(rotation, dtype=float)
        t = np.asarray(translation, dtype=float)
        return LineSegment3(R @ self.a + t, R @ self.b + t, self.confidence)

    def with_confidence(self, confidence: float) -> "LineSegment3":
        return LineSegment3(self.a, self.b, confidence)


@dataclass(frozen=True)
class BinModel:
    """Outer bin dimensions in meters; ``length >= width``."""

    width: float
    length: float
    height: float

    def __post_init__(self):
        for name in ("width", "length", "height"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"bin {name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        if self.length < self.width:
            raise ValueError("bin length must be >= width")


def check_rotation(R, tol: float = ROTATION_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidRotation("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidRotation("matrix is not a proper rotation")
    return R


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping bin-frame coordinates to scene coordinates."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        object.__setattr__(self, "translation", _vec3(self.translation))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


@dataclass(frozen=True)
class EndpointMatrix:
    """The 8 segment endpoints centered on their centroid (8x3)."""

    rows: np.ndarray
    centroid: np.ndarray


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def center_endpoints(segments) -> EndpointMatrix:
    """Center the 8 endpoints of 4 segments on their centroid.

    Also accepts a raw endpoint array of shape ``(8, 3)`` or ``(4, 2, 3)``,
    which need not satisfy the segment invariants.
    """
    if isinstance(segments, np.ndarray):
        pts = segments.astype(float).reshape(-1, 3)
        if pts.shape[0] != 8:
            raise WrongSegmentCount(f"expected 8 endpoints, got {pts.shape[0]}")
    else:
        if len(segments) != 4:
            raise WrongSegmentCount(f"expected 4 segments, got {len(segments)}")
        pts = np.array([p for s in segments for p in (s.a, s.b)], dtype=float)
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite endpoints")
    centroid = pts.sum(axis=0) / 8.0
    return EndpointMatrix(pts - centroid, centroid)


def fit_oriented_normal(E: EndpointMatrix) -> np.ndarray:
    """Unit normal of the least-squares plane through the centered rows.

    The normal is the right singular vector of the smallest singular value,
    flipped so that its z component is non-negative.
    """
    rows = E.rows if isinstance(E, EndpointMatrix) else np.asarray(E, dtype=float)
    _, sv, vt = np.linalg.svd(rows, full_matrices=True)
    sv = np.concatenate([sv, np.zeros(3 - len(sv))])
    if sv[0] == 0.0 or sv[1] < RANK_TOL * sv[0]:
        raise DegenerateGeometry("endpoints do not span a plane")
    n = vt[2]
    if abs(n[2]) < FLIP_TOL:
        raise AmbiguousOrientation("plane normal is horizontal; cannot orient upwards")
    if n[2] < 0:
        n = -n
    return n / np.linalg.norm(n)


def fuse_directions(d1, d2) -> np.ndarray:
    d1 = _vec3(d1)
    d2 = _vec3(d2)
    if np.linalg.norm(d1) < ZERO_DIR_TOL or np.linalg.norm(d2) < ZERO_DIR_TOL:
        raise ZeroDirection("direction vector has zero length")
    if d1 @ d2 >= 0:
        return (d1 + d2) / 2.0
    return (d1 - d2) / 2.0


def build_rotation(n, d) -> np.ndarray:
    """Gram-Schmidt frame with z along ``n`` and x along ``d`` projected off ``n``."""
    n = _vec3(n)
    d = _vec3(d)
    nn = np.linalg.norm(n)
    nd = np.linalg.norm(d)
    if nn < ZERO_DIR_TOL or nd < ZERO_DIR_TOL:
        raise ZeroDirection("direction vector has zero length")
    r_z = n / nn
    rx_hat = d - (r_z @ d) * r_z
    norm_rx = np.linalg.norm(rx_hat)
    if norm_rx < PARALLEL_TOL * nd:
        raise ParallelVectors("in-plane direction is parallel to the normal")
    r_x = rx_hat / norm_rx
    r_y = np.cross(r_z, r_x)
    return np.column_stack([r_x, r_y, r_z])


def cluster_to_four(points, weighted: bool = False) -> list[np.ndarray]:
    """Greedily merge the closest pair of points until four remain.

    The merged point replaces the lower-indexed member of the pair and the
    other is removed. Ties go to the lexicographically smallest index pair.
    With ``weighted=True`` merges average by the number of original points
    each cluster already holds instead of taking the plain midpoint.
    """
    pts = [_vec3(p) for p in points]
    if len(pts) < 4:
        raise TooFewPoints(f"need at least 4 points, got {len(pts)}")
    sizes = [1] * len(pts)
    while len(pts) > 4:
        P = np.array(pts)
        diff = P[:, None, :] - P[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        d2[np.tril_indices(len(pts))] = np.inf
        i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)
        if weighted:
            wi, wj = sizes[i], sizes[j]
            merged = (wi * pts[i] + wj * pts[j]) / (wi + wj)
        else:
            merged = (pts[i] + pts[j]) / 2.0
        pts[i] = merged
        sizes[i] += sizes[j]
        del pts[j]
        del sizes[j]
    return pts


def compute_translation(centers, r_z, bin: BinModel) -> np.ndarray:
    Q = np.asarray(centers, dtype=float).reshape(4, 3)
    return Q.sum(axis=0) / 4.0 - bin.height * _vec3(r_z)


def select_top_segments(segments: Sequence[LineSegment3], k: int = 4) -> list[LineSegment3]:
    """The ``k`` most confident segments, kept in input order.

    Equal confidences are resolved in favour of earlier segments.
    """
    if len(segments) < k:
        raise WrongSegmentCount(f"need at least {k} segments, got {len(segments)}")
    order = sorted(range(len(segments)), key=lambda i: -segments[i].confidence)
    return [segments[i] for i in sorted(order[:k])]


def estimate_pose(
    segments: Sequence[LineSegment3], bin: BinModel, weighted_merge: bool = False
) -> Pose:
    """Estimate the bin pose from detected rim segments.

    :param segments: at least four segments; the four most confident are used
    :param bin: bin model supplying the height used to drop from rim to origin
    :param weighted_merge: use size-weighted means when merging endpoints
    :return: the estimated :class:`Pose`
    """
    for s in segments:
        if not np.isfinite(s.confidence):
            raise ValueError("non-finite confidence")
    chosen = select_top_segments(segments, 4)
    E = center_endpoints(chosen)
    n = fit_oriented_normal(E)

    # d1/d2 follow input order so the sign of d does not hinge on which of
    # two near-equal lengths compares larger
    i, j = sorted(sorted(range(4), key=lambda k: -chosen[k].length)[:2])
    d = fuse_directions(chosen[i].direction, chosen[j].direction)
    R = build_rotation(n, d)

    endpoints = [p for s in chosen for p in (s.a, s.b)]
    centers = cluster_to_four(endpoints, weighted=weighted_merge)
    t = compute_translation(centers, R[:, 2], bin)
    return Pose(R, t)


def symmetric_rotations(R) -> tuple[np.ndarray, np.ndarray]:
    """``R`` and the equivalent rotation turned by pi about the bin z axis."""
    R = np.asarray(R, dtype=float)
    return R, R @ np.diag([-1.0, -1.0, 1.0])
