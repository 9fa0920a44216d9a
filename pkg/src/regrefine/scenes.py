"""Synthetic scene pairs with known ground truth.

An open stage (floor plus back wall) gets cluttered with boxes and
spheres, then two overlapping crops become the reference and source
clouds. The source is expressed in its own frame via a random rigid
motion, so the ground-truth transform maps source into reference
exactly. Overlap is carved by quantile cuts along x, which keeps the
realized overlap fraction close to the request at any point density.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import PointCloud, RigidTransform, apply_transform, compose, invert
from .descriptors import farthest_point_sample
from .errors import InputValidationError, ParseError

CROP_FRACTION = 0.6  # share of the scene given to the reference crop


@dataclass
class ScenePair:
    p: PointCloud  # reference
    q: PointCloud  # source, in its own frame
    t_gt: RigidTransform  # maps source frame into reference frame
    t_init: RigidTransform
    meta: dict = field(default_factory=dict)


def _unit_vector(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    n = np.linalg.norm(v)
    while n < 1e-12:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
    return v / n


def random_transform(rng, max_angle_deg: float = 30.0,
                     max_translation: float = 1.0) -> RigidTransform:
    axis = _unit_vector(rng)
    angle = np.radians(rng.uniform(0.0, max_angle_deg))
    trans = _unit_vector(rng) * rng.uniform(0.0, max_translation)
    return RigidTransform.from_axis_angle(axis, angle, trans)


def perturb_transform(t: RigidTransform, angle_deg: float, translation: float,
                      rng) -> RigidTransform:
    """Compose a perturbation of exact magnitude onto a transform.

    The result differs from ``t`` by exactly ``angle_deg`` of rotation and
    ``translation`` meters, in a random direction.
    """
    if angle_deg < 0 or translation < 0:
        raise InputValidationError("perturbation magnitudes must be >= 0")
    delta = RigidTransform.from_axis_angle(
        _unit_vector(rng), np.radians(angle_deg), _unit_vector(rng) * translation
    )
    return compose(delta, t)


def _sample_box(rng, center, half, n) -> np.ndarray:
    """Uniform surface samples of an axis-aligned box."""
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    faces = rng.choice(3, size=n, p=areas / areas.sum())
    signs = rng.choice([-1.0, 1.0], size=n)
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    pts[np.arange(n), faces] = signs * half[faces]
    return pts + center


def _sample_sphere(rng, center, radius, n) -> np.ndarray:
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return center + radius * dirs


def make_room_cloud(rng, n_points: int = 20000, size: float = 4.0,
                    clutter: int = 6) -> np.ndarray:
    """Open stage: floor, back wall, and surface-sampled clutter.

    Every structural surface spans the full x range uniformly, so
    quantile cuts along x carve overlap bands of predictable mass. The
    stage stays open toward low z, which keeps auto-framed renders
    unobstructed.
    """
    if n_points < 100:
        raise InputValidationError("n_points must be >= 100")
    height = size * 0.625
    n_struct = int(n_points * 0.6)
    areas = np.array([size * size, size * height])
    counts = np.maximum((n_struct * areas / areas.sum()).astype(int), 1)
    floor = np.stack([
        rng.uniform(0, size, counts[0]),
        np.zeros(counts[0]),
        rng.uniform(0, size, counts[0]),
    ], axis=1)
    wall = np.stack([
        rng.uniform(0, size, counts[1]),
        rng.uniform(0, height, counts[1]),
        np.full(counts[1], size),
    ], axis=1)
    parts = [floor, wall]
    n_clutter = n_points - sum(c.shape[0] for c in parts)
    per = np.full(clutter, n_clutter // clutter)
    per[: n_clutter % clutter] += 1
    for k in range(clutter):
        center = np.array([
            rng.uniform(0.1 * size, 0.9 * size),
            rng.uniform(0.08 * size, 0.35 * size),
            rng.uniform(0.25 * size, 0.85 * size),
        ])
        if rng.uniform() < 0.5:
            half = rng.uniform(0.03 * size, 0.12 * size, size=3)
            parts.append(_sample_box(rng, center, half, per[k]))
        else:
            parts.append(_sample_sphere(rng, center, rng.uniform(0.03 * size, 0.12 * size), per[k]))
    return np.concatenate(parts, axis=0)


def measure_overlap(p_pts, q_pts, t_gt: RigidTransform,
                    radius: float = 0.025) -> float:
    """Fraction of reference points with a source neighbor within radius
    once the source is mapped through the ground-truth transform."""
    from scipy.spatial import cKDTree

    p_pts = np.asarray(p_pts, dtype=np.float64)
    tree = cKDTree(apply_transform(t_gt, np.asarray(q_pts, dtype=np.float64)))
    d, _ = tree.query(p_pts, k=1)
    return float(np.count_nonzero(d < radius) / max(p_pts.shape[0], 1))


def matched_descriptors(p_pts, q_pts, t_gt: RigidTransform, rng,
                        n_keypoints: int = 500, dim: int = 32,
                        corruption: float = 0.2, match_radius: float = 0.02):
    """Planted correspondence structure mimicking an upstream matcher.

    Reference keypoints are farthest-point sampled inside the true
    overlap region, and each shares its descriptor (lightly jittered)
    with its ground-truth counterpart in the source. A corruption
    fraction of the source descriptors is replaced by fresh noise, so
    those pairs can only re-match by accident. Returns
    (p_indices, p_descriptors, q_indices, q_descriptors).
    """
    if not 0.0 <= corruption <= 1.0:
        raise InputValidationError("corruption must be in [0, 1]")
    p_pts = np.asarray(p_pts, dtype=np.float64)
    q_pts = np.asarray(q_pts, dtype=np.float64)
    from .core import SpatialIndex

    q_index = SpatialIndex(apply_transform(t_gt, q_pts))
    nn_idx, nn_dist = q_index.query_many(p_pts)
    overlap = np.flatnonzero(nn_dist <= match_radius)
    if overlap.size == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, np.empty((0, dim)), empty, np.empty((0, dim))
    seed_p = int(rng.integers(2**31))
    local = farthest_point_sample(
        p_pts[overlap], min(n_keypoints, overlap.size), seed=seed_p)
    p_idx = overlap[local]
    twins = nn_idx[p_idx].astype(np.intp)
    # Two keypoints can share a source twin only if they sit closer than
    # the FPS spacing, which the radius forbids; dedup anyway.
    _, first = np.unique(twins, return_index=True)
    keep = np.zeros(twins.size, dtype=bool)
    keep[first] = True
    p_idx, twins = p_idx[keep], twins[keep]
    p_desc = rng.standard_normal((p_idx.size, dim))
    order = np.argsort(twins, kind="stable")
    q_idx = twins[order]
    q_desc = p_desc[order] + 0.05 * rng.standard_normal((q_idx.size, dim))
    n_corrupt = int(np.floor(corruption * q_idx.size))
    if n_corrupt:
        victims = rng.choice(q_idx.size, size=n_corrupt, replace=False)
        q_desc[victims] = rng.standard_normal((n_corrupt, dim))
    return p_idx, p_desc, q_idx, q_desc


def generate_scene(seed: int, n_points: int = 20000, overlap: float = 0.4,
                   noise: float = 0.005, init_angle_deg: float = 5.0,
                   init_translation: float = 0.2, size: float = 4.0,
                   n_keypoints: int = 500, descriptor_corruption: float = 0.2,
                   descriptor_dim: int = 32, clutter: int = 6) -> ScenePair:
    """Build one reproducible reference/source pair with ground truth.

    The same seed and parameters always produce identical arrays.
    """
    if not 0.05 <= overlap <= 1.0:
        raise InputValidationError("overlap must be in [0.05, 1]")
    if noise < 0:
        raise InputValidationError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    scene = make_room_cloud(rng, n_points=n_points, size=size, clutter=clutter)
    x = scene[:, 0]
    if overlap >= 1.0:
        # Full overlap keeps both crops identical, point for point.
        p_mask = np.ones(x.size, dtype=bool)
        q_mask = p_mask
    else:
        hi_cut = np.quantile(x, CROP_FRACTION)
        lo_cut = np.quantile(x, CROP_FRACTION * (1.0 - overlap))
        p_mask = x <= hi_cut
        q_mask = x >= lo_cut
    p_pts = scene[p_mask] + rng.normal(0.0, noise, size=(int(p_mask.sum()), 3))
    t_gt = random_transform(rng)
    q_world = scene[q_mask]
    q_pts = apply_transform(invert(t_gt), q_world)
    q_pts = q_pts + rng.normal(0.0, noise, size=q_pts.shape)
    t_init = perturb_transform(t_gt, init_angle_deg, init_translation, rng)
    overlap_measured = measure_overlap(p_pts, q_pts, t_gt)

    # Twin points carry independent noise on both sides, so their gap is
    # sigma * sqrt(2) per axis; 6 sigma catches essentially all of them.
    p_i, p_d, q_i, q_d = matched_descriptors(
        p_pts, q_pts, t_gt, rng, n_keypoints=n_keypoints, dim=descriptor_dim,
        corruption=descriptor_corruption, match_radius=max(6.0 * noise, 0.015),
    )
    meta = {
        "seed": int(seed),
        "n_points": int(n_points),
        "overlap_requested": float(overlap),
        "overlap_measured": overlap_measured,
        "noise": float(noise),
        "init_angle_deg": float(init_angle_deg),
        "init_translation": float(init_translation),
        "size": float(size),
        "n_keypoints": int(n_keypoints),
        "descriptor_corruption": float(descriptor_corruption),
    }
    return ScenePair(
        PointCloud(p_pts, keypoint_indices=p_i, descriptors=p_d),
        PointCloud(q_pts, keypoint_indices=q_i, descriptors=q_d),
        t_gt,
        t_init,
        meta,
    )


# On-disk layout of a scene directory. Descriptors go to plain .npy files
# (not an archive) so repeated generation is byte-identical.
SCENE_FILES = {
    "p": "p.ply",
    "q": "q.ply",
    "t_gt": "t_gt.txt",
    "t_init": "t_init.txt",
    "meta": "meta.json",
}


def save_scene(out_dir, scene: ScenePair):
    from .fileio import save_ply, save_pose

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_ply(out / SCENE_FILES["p"], scene.p, binary=True)
    save_ply(out / SCENE_FILES["q"], scene.q, binary=True)
    save_pose(out / SCENE_FILES["t_gt"], scene.t_gt)
    save_pose(out / SCENE_FILES["t_init"], scene.t_init)
    for side, cloud in (("p", scene.p), ("q", scene.q)):
        np.save(out / f"{side}_keypoints.npy", cloud.keypoint_indices)
        np.save(out / f"{side}_descriptors.npy", cloud.descriptors)
    with open(out / SCENE_FILES["meta"], "w") as f:
        json.dump(scene.meta, f, sort_keys=True, indent=2)
        f.write("\n")


def load_scene(scene_dir) -> ScenePair:
    from .fileio import load_ply, load_pose

    d = Path(scene_dir)
    if not d.is_dir():
        raise ParseError(f"scene directory not found: {d}")
    clouds = {}
    for side in ("p", "q"):
        cloud = load_ply(d / SCENE_FILES[side])
        kp_path = d / f"{side}_keypoints.npy"
        desc_path = d / f"{side}_descriptors.npy"
        if kp_path.is_file() and desc_path.is_file():
            cloud = PointCloud(
                cloud.points,
                keypoint_indices=np.load(kp_path),
                descriptors=np.load(desc_path),
            )
        clouds[side] = cloud
    meta = {}
    meta_path = d / SCENE_FILES["meta"]
    if meta_path.is_file():
        with open(meta_path) as f:
            meta = json.load(f)
    return ScenePair(
        clouds["p"],
        clouds["q"],
        load_pose(d / SCENE_FILES["t_gt"]),
        load_pose(d / SCENE_FILES["t_init"]),
        meta,
    )
