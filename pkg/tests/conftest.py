"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's own code paths: rigid
alignment uses Horn's quaternion eigendecomposition instead of SVD,
nearest neighbors use brute force instead of a kd-tree, and so on, so
agreement between the two is meaningful evidence.
"""

import numpy as np
import pytest

from regrefine.core import RigidTransform


def horn_quaternion(src, dst, weights=None):
    """Weighted rigid alignment via Horn's unit-quaternion closed form.

    Returns (R, t) minimizing the weighted squared residuals of
    R @ src + t vs dst. Independent of the SVD solver under test.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    w = np.ones(len(src)) if weights is None else np.asarray(weights, np.float64)
    w = w / w.sum()
    sc = (w[:, None] * src).sum(0)
    dc = (w[:, None] * dst).sum(0)
    a = src - sc
    b = dst - dc
    m = (w[:, None] * a).T @ b
    sxx, sxy, sxz = m[0]
    syx, syy, syz = m[1]
    szx, szy, szz = m[2]
    n = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    vals, vecs = np.linalg.eigh(n)
    qw, qx, qy, qz = vecs[:, np.argmax(vals)]
    r = np.array([
        [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
        [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
        [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
    ])
    t = dc - r @ sc
    return r, t


def random_rigid(rng, max_angle_rad=np.pi, max_translation=2.0):
    """Uniformly oriented random rigid transform, independent construction."""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle_rad)
    kx, ky, kz = axis
    kmat = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    r = np.eye(3) + np.sin(angle) * kmat + (1 - np.cos(angle)) * (kmat @ kmat)
    t = rng.uniform(-max_translation, max_translation, 3)
    return RigidTransform(r, t)


def brute_force_nn(queries, points):
    """Exhaustive nearest neighbors; lowest index wins ties."""
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    d = np.linalg.norm(queries[:, None, :] - points[None, :, :], axis=2)
    idx = np.argmin(d, axis=1)  # argmin returns the first minimum
    return idx, d[np.arange(len(queries)), idx]


def planted_correspondences(rng, n=500, outlier_ratio=0.7, noise=0.005,
                            edge=1.0, t_gt=None):
    """Correspondence fixture with known inlier labels.

    Inlier pairs relate by t_gt plus Gaussian noise; outlier pairs connect
    unrelated points, each endpoint uniform over its own cloud's extent
    (the source cube and its transformed image respectively).
    Returns (src, dst, t_gt, inlier_mask).
    """
    from regrefine.core import apply_transform

    if t_gt is None:
        t_gt = random_rigid(rng, max_angle_rad=np.radians(30.0), max_translation=1.0)
    n_out = int(round(outlier_ratio * n))
    n_in = n - n_out
    src_in = rng.uniform(0, edge, (n_in, 3))
    dst_in = apply_transform(t_gt, src_in) + rng.normal(0, noise, (n_in, 3))
    src_out = rng.uniform(0, edge, (n_out, 3))
    dst_out = apply_transform(t_gt, rng.uniform(0, edge, (n_out, 3)))
    src = np.vstack([src_in, src_out])
    dst = np.vstack([dst_in, dst_out])
    mask = np.zeros(n, dtype=bool)
    mask[:n_in] = True
    perm = rng.permutation(n)
    return src[perm], dst[perm], t_gt, mask[perm]


def single_set_bank(pairs, weights):
    """A candidate bank holding one real geometric set and four empty ones."""
    from regrefine.core import CorrespondenceSet
    from regrefine.correspondence import BANK_LABELS, CandidateBank

    sets = {
        lbl: CorrespondenceSet(np.zeros((0, 2), dtype=np.intp), np.zeros(0), label=lbl)
        for lbl in BANK_LABELS
    }
    sets["geo3d"] = CorrespondenceSet(pairs, weights, label="geo3d")
    return CandidateBank(sets, degraded=[l for l in BANK_LABELS if l != "geo3d"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
