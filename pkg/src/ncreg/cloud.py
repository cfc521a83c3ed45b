"""Geometry primitives: point clouds, rigid transforms, deterministic k-NN."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "PointCloud",
    "RigidTransform",
    "NeighborIndex",
    "build_knn_index",
    "apply_transform",
    "compose",
    "invert",
    "euler_zyx_to_matrix",
    "matrix_to_euler_zyx",
]

_ORTHO_TOL = 1e-9


def as_points(points: Sequence) -> np.ndarray:
    """Validate and return an (N, 3) float64 coordinate array."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) point array, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError("a point cloud needs at least one point")
    if not np.isfinite(pts).all():
        raise ValueError("point coordinates must all be finite")
    return pts


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points with optional provenance ids.

    ``ids`` track the original indices of points that survive a crop, so a
    downstream consumer can tell which points still have a true counterpart
    in a partially overlapping cloud.
    """

    points: np.ndarray
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = as_points(self.points)
        object.__setattr__(self, "points", pts)
        if self.ids is not None:
            ids = np.asarray(self.ids, dtype=np.int64)
            if ids.shape != (pts.shape[0],):
                raise ValueError("ids must be one int per point")
            if np.unique(ids).size != ids.size:
                raise ValueError("ids must be unique")
            object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (3x3 orthonormal, det +1) plus translation (3-vector)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not (np.isfinite(rot).all() and np.isfinite(t).all()):
            raise ValueError("transform entries must be finite")
        if np.abs(rot.T @ rot - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant must be +1 (no reflections)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        """Row-major 4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def compose(first: RigidTransform, second: RigidTransform) -> RigidTransform:
    """Transform applying ``second`` and then ``first``."""
    return RigidTransform(
        first.rotation @ second.rotation,
        first.rotation @ second.translation + first.translation,
    )


def invert(transform: RigidTransform) -> RigidTransform:
    rot = transform.rotation.T
    return RigidTransform(rot, -rot @ transform.translation)


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Rigidly move a cloud; provenance ids are preserved."""
    return PointCloud(transform.apply(cloud.points), cloud.ids)


@dataclass(frozen=True)
class NeighborIndex:
    """Per-point neighbor lists, each of length k.

    Row i lists the k points nearest to point i sorted by ascending distance
    with ties broken by ascending index; point i itself is excluded.
    """

    k: int
    neighbors: np.ndarray

    def __post_init__(self):
        nbr = np.asarray(self.neighbors, dtype=np.int64)
        if nbr.ndim != 2 or nbr.shape[1] != self.k:
            raise ValueError("neighbors must be an (N, k) index array")
        object.__setattr__(self, "neighbors", nbr)


def build_knn_index(cloud: PointCloud, k: int) -> NeighborIndex:
    """Exhaustive k nearest neighbors with deterministic (distance, index) order.

    Squared distances are computed by direct coordinate differences so the
    ordering matches a brute-force oracle exactly; a stable argsort keeps
    equal distances in ascending index order.
    """
    n = len(cloud)
    if k < 1:
        raise ValueError("k must be positive")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the cloud size {n}")
    pts = cloud.points
    neighbors = np.empty((n, k), dtype=np.int64)
    block = 256
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = np.square(pts[start:stop, None, :] - pts[None, :, :]).sum(axis=2)
        for row in range(stop - start):
            d2[row, start + row] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        neighbors[start:stop] = order[:, :k]
    return NeighborIndex(k=k, neighbors=neighbors)


def euler_zyx_to_matrix(angles_deg: Sequence[float]) -> np.ndarray:
    """Rotation from intrinsic z-y-x Euler angles given as (z, y, x) degrees."""
    az, ay, ax = np.deg2rad(np.asarray(angles_deg, dtype=np.float64).reshape(3))
    cz, sz = math.cos(az), math.sin(az)
    cy, sy = math.cos(ay), math.sin(ay)
    cx, sx = math.cos(ax), math.sin(ax)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


# |pitch| within 1e-6 degrees of 90 makes the z/x split of a z-y-x
# decomposition ill-defined; callers are told via the flag.
_GIMBAL_COS = math.cos(math.radians(1e-6))


def matrix_to_euler_zyx(rotation: np.ndarray) -> tuple[np.ndarray, bool]:
    """Intrinsic z-y-x Euler angles in degrees, plus a gimbal-lock flag."""
    r = np.asarray(rotation, dtype=np.float64)
    sy = -r[2, 0]
    gimbal = abs(sy) >= _GIMBAL_COS
    if gimbal:
        ay = math.copysign(math.pi / 2.0, sy)
        ax = 0.0
        az = math.atan2(-r[0, 1], r[1, 1])
    else:
        ay = math.asin(max(-1.0, min(1.0, sy)))
        az = math.atan2(r[1, 0], r[0, 0])
        ax = math.atan2(r[2, 1], r[2, 2])
    return np.degrees(np.array([az, ay, ax])), gimbal
