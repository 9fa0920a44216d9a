"""Geometric primitives: rigid transforms, point clouds, metrics, NN search.

Transform convention used throughout the package: a transform maps points
from the SOURCE cloud's frame into the REFERENCE cloud's frame,
``p_ref = R @ p_src + t``. Ground-truth and initial poses follow the same
convention.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputValidationError
from .validation import (
    check_points,
    check_rotation,
    check_vector3,
    check_weights,
    orthonormalize,
)

# Orthonormality drift beyond this triggers re-projection onto SO(3).
_ROTATION_DRIFT_TOL = 1e-9


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (3x3, SO(3)) plus translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "rotation", check_rotation(self.rotation, tol=1e-9)
        )
        object.__setattr__(self, "translation", check_vector3(self.translation))
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @staticmethod
    def identity():
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(mat):
        """Build from a 4x4 homogeneous matrix (bottom row 0 0 0 1)."""
        arr = np.asarray(mat, dtype=np.float64)
        if arr.shape != (4, 4):
            raise InputValidationError(f"expected 4x4 matrix, got {arr.shape}")
        if np.abs(arr[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-6:
            raise InputValidationError("bottom row of pose matrix must be 0 0 0 1")
        return RigidTransform(arr[:3, :3], arr[:3, 3])

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_axis_angle(axis, angle_rad, translation=(0.0, 0.0, 0.0)):
        """Rodrigues construction; axis need not be unit length."""
        axis = check_vector3(axis, "axis")
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise InputValidationError("rotation axis must be non-zero")
        k = axis / norm
        kx = np.array(
            [[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]]
        )
        r = np.eye(3) + np.sin(angle_rad) * kx + (1 - np.cos(angle_rad)) * (kx @ kx)
        return RigidTransform(orthonormalize(r), np.asarray(translation, dtype=float))


def apply_transform(t: RigidTransform, pts) -> np.ndarray:
    """Apply ``R @ p + t`` to each point; returns (N, 3)."""
    pts = check_points(pts, allow_empty=True)
    return pts @ t.rotation.T + t.translation


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equal to applying ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    drift = np.abs(r.T @ r - np.eye(3)).max()
    if drift > _ROTATION_DRIFT_TOL:
        r = orthonormalize(r)
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    return RigidTransform(t.rotation.T, -t.rotation.T @ t.translation)


def rotation_error(est: RigidTransform, gt: RigidTransform) -> float:
    """Geodesic distance between the two rotations, in degrees [0, 180].

    The cosine comes from the identity trace(A^T B) = 3 - |A - B|_F^2 / 2
    (exact for rotations) rather than summing the trace directly: the
    direct sum cancels catastrophically near identity and floors the
    measurable angle at ~1e-6 degrees, while the difference form lets
    near-identical rotations measure as zero.
    """
    d = gt.rotation - est.rotation
    c = 1.0 - float(np.sum(d * d)) / 4.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def translation_error(est: RigidTransform, gt: RigidTransform) -> float:
    """Euclidean distance between the two translations, in meters."""
    return float(np.linalg.norm(est.translation - gt.translation))


def registration_recall(results, re_thresh_deg: float, te_thresh_m: float) -> float:
    """Fraction of (est, gt) pairs within both error thresholds."""
    results = list(results)
    if not results:
        raise InputValidationError("registration_recall needs a non-empty result list")
    if re_thresh_deg <= 0 or te_thresh_m <= 0:
        raise InputValidationError("recall thresholds must be positive")
    hits = sum(
        1
        for est, gt in results
        if rotation_error(est, gt) <= re_thresh_deg
        and translation_error(est, gt) <= te_thresh_m
    )
    return hits / len(results)


@dataclass
class PointCloud:
    """3D points with optional sampled keypoints and per-keypoint descriptors.

    ``keypoint_indices`` index into ``points``; ``descriptors`` holds one
    feature vector per keypoint (row-aligned with ``keypoint_indices``).
    """

    points: np.ndarray
    keypoint_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    descriptors: np.ndarray | None = None

    def __post_init__(self):
        self.points = check_points(self.points)
        self.keypoint_indices = np.asarray(self.keypoint_indices, dtype=np.intp).reshape(-1)
        n = self.points.shape[0]
        if self.keypoint_indices.size:
            if self.keypoint_indices.min() < 0 or self.keypoint_indices.max() >= n:
                raise InputValidationError("keypoint index out of range")
        if self.descriptors is not None:
            self.descriptors = np.asarray(self.descriptors, dtype=np.float64)
            if self.descriptors.ndim != 2:
                raise InputValidationError("descriptors must be a 2D (K, D) array")
            if self.descriptors.shape[0] != self.keypoint_indices.shape[0]:
                raise InputValidationError(
                    "descriptor count must equal keypoint count "
                    f"({self.descriptors.shape[0]} != {self.keypoint_indices.shape[0]})"
                )
            if self.descriptors.size and self.descriptors.shape[1] < 1:
                raise InputValidationError("descriptor dimension must be >= 1")
            if not np.isfinite(self.descriptors).all():
                raise InputValidationError("descriptors contain non-finite values")

    @property
    def keypoints(self) -> np.ndarray:
        """Keypoint coordinates, (K, 3)."""
        return self.points[self.keypoint_indices]

    def __len__(self):
        return self.points.shape[0]


@dataclass
class CorrespondenceSet:
    """Index pairs (first side, second side) with confidence weights in [0, 1]."""

    pairs: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.intp).reshape(-1, 2)
        self.weights = check_weights(self.weights, self.pairs.shape[0])

    def __len__(self):
        return self.pairs.shape[0]


class SpatialIndex:
    """Exact Euclidean nearest-neighbor index over a fixed point set.

    Backed by a k-d tree for speed; the result is always the exact nearest
    neighbor, with equidistant ties broken by the lowest point index.
    """

    def __init__(self, pts):
        pts = check_points(pts, "index points")
        self._pts = pts
        self._tree = cKDTree(pts)

    @property
    def points(self):
        return self._pts

    def query(self, q):
        """Nearest neighbor of one query point; returns (index, distance)."""
        q = check_vector3(q, "query")
        idx, dist = self.query_many(q.reshape(1, 3))
        return int(idx[0]), float(dist[0])

    def query_many(self, qs):
        """Vectorized nearest-neighbor query; returns (indices, distances)."""
        qs = check_points(qs, "queries", allow_empty=True)
        if qs.shape[0] == 0:
            return np.zeros(0, dtype=np.intp), np.zeros(0)
        dist, idx = self._tree.query(qs, k=1)
        dist = np.atleast_1d(dist)
        idx = np.atleast_1d(idx).astype(np.intp)
        # Tie-break deterministically: re-examine every candidate within an
        # epsilon ball and keep the lowest index among exact minima.
        out_idx = idx.copy()
        out_dist = dist.copy()
        for i in range(qs.shape[0]):
            radius = dist[i] * (1 + 1e-9) + 1e-12
            cand = self._tree.query_ball_point(qs[i], radius)
            if len(cand) <= 1:
                out_dist[i] = np.linalg.norm(self._pts[out_idx[i]] - qs[i])
                continue
            cand = np.sort(np.asarray(cand, dtype=np.intp))
            d = np.linalg.norm(self._pts[cand] - qs[i], axis=1)
            best = d.min()
            out_idx[i] = cand[np.flatnonzero(d == best)[0]]
            out_dist[i] = best
        return out_idx, out_dist


def build_index(pts) -> SpatialIndex:
    return SpatialIndex(pts)


def query_nn(index: SpatialIndex, q):
    return index.query(q)
