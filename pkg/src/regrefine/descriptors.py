"""Keypoint selection and rotation-invariant local shape descriptors.

These fill in when a cloud arrives without precomputed keypoints or
descriptors. Farthest-point sampling spreads keypoints evenly; each one
then gets covariance eigenstructure and radial statistics of its local
neighborhood, all invariant to rigid motion so the two clouds can be
described independently.
"""

import numpy as np
from scipy.spatial import cKDTree

from .core import PointCloud
from .errors import InputValidationError
from .validation import check_points

DESCRIPTOR_DIM = 12


def farthest_point_sample(points, count: int, seed: int = 0) -> np.ndarray:
    """Greedy farthest-point subset; start point drawn from the seed.

    Distance ties resolve to the lowest index. Returns sorted indices.
    """
    pts = check_points(points, "points")
    if count < 1:
        raise InputValidationError("count must be >= 1")
    n = pts.shape[0]
    count = min(count, n)
    rng = np.random.default_rng(seed)
    start = int(rng.integers(n))
    chosen = np.empty(count, dtype=np.intp)
    chosen[0] = start
    dist = np.linalg.norm(pts - pts[start], axis=1)
    for i in range(1, count):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1), out=dist)
    return np.sort(chosen)


def auto_radius(points, factor: float = 5.0) -> float:
    """Neighborhood radius scaled from the median nearest-neighbor spacing."""
    pts = check_points(points, "points")
    if pts.shape[0] < 2:
        raise InputValidationError("need at least 2 points to pick a radius")
    tree = cKDTree(pts)
    d, _ = tree.query(pts, k=2)
    med = float(np.median(d[:, 1]))
    if med <= 0:
        raise InputValidationError("points are fully coincident")
    return factor * med


def compute_descriptors(points, keypoint_indices, radius: float | None = None) -> np.ndarray:
    """Per-keypoint eigenfeatures and radial stats of the local ball.

    Rows for keypoints with fewer than 4 neighbors are all-zero, which
    downstream feature matching treats as featureless and skips.
    """
    pts = check_points(points, "points")
    idx = np.asarray(keypoint_indices, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= pts.shape[0]):
        raise InputValidationError("keypoint index out of range")
    if radius is None:
        radius = auto_radius(pts)
    if radius <= 0:
        raise InputValidationError("radius must be positive")
    tree = cKDTree(pts)
    out = np.zeros((idx.size, DESCRIPTOR_DIM))
    neighborhoods = tree.query_ball_point(pts[idx], radius)
    for row, (ki, members) in enumerate(zip(idx, neighborhoods)):
        nbrs = pts[members]
        if nbrs.shape[0] < 4:
            continue
        center = nbrs.mean(axis=0)
        diff = nbrs - center
        cov = diff.T @ diff / nbrs.shape[0]
        lam = np.linalg.eigvalsh(cov)[::-1]  # descending
        lam = np.maximum(lam, 0.0)
        total = lam.sum()
        if total <= 0:
            continue
        e = lam / total
        l1 = max(lam[0], 1e-300)
        rad = np.linalg.norm(nbrs - pts[ki], axis=1)
        out[row] = [
            e[0], e[1], e[2],
            (lam[0] - lam[1]) / l1,          # linearity
            (lam[1] - lam[2]) / l1,          # planarity
            lam[2] / l1,                     # sphericity
            lam[2] / total,                  # surface variation
            np.cbrt(max(e[0] * e[1] * e[2], 0.0)),  # omnivariance
            rad.mean() / radius,
            rad.std() / radius,
            rad.max() / radius,
            np.linalg.norm(center - pts[ki]) / radius,  # centroid offset
        ]
    return out


def with_keypoints(cloud: PointCloud, count: int = 500, seed: int = 0,
                   radius: float | None = None) -> PointCloud:
    """Return a cloud that has keypoints and descriptors, sampling if absent."""
    has_kp = cloud.keypoint_indices is not None and cloud.keypoint_indices.size > 0
    if has_kp and cloud.descriptors is not None:
        return cloud
    if has_kp:
        idx = cloud.keypoint_indices
    else:
        idx = farthest_point_sample(cloud.points, count, seed=seed)
    desc = compute_descriptors(cloud.points, idx, radius=radius)
    return PointCloud(cloud.points, keypoint_indices=idx, descriptors=desc)
