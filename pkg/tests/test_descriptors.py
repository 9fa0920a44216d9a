import numpy as np
import pytest
from conftest import random_rigid

from regrefine.core import PointCloud, apply_transform
from regrefine.descriptors import (
    DESCRIPTOR_DIM,
    auto_radius,
    compute_descriptors,
    farthest_point_sample,
    with_keypoints,
)
from regrefine.errors import InputValidationError


class TestFarthestPointSample:
    def test_deterministic_and_sorted(self, rng):
        pts = rng.uniform(0, 1, (100, 3))
        a = farthest_point_sample(pts, 20, seed=7)
        b = farthest_point_sample(pts, 20, seed=7)
        assert np.array_equal(a, b)
        assert np.array_equal(a, np.sort(a))
        assert len(np.unique(a)) == 20

    def test_count_capped_at_cloud_size(self, rng):
        pts = rng.uniform(0, 1, (5, 3))
        idx = farthest_point_sample(pts, 50)
        assert np.array_equal(idx, np.arange(5))

    def test_single_point(self):
        assert np.array_equal(farthest_point_sample(np.zeros((1, 3)), 3), [0])

    def test_line_sample_reaches_far_end(self):
        # the first greedy hop always lands on whichever endpoint is
        # farther from the start, so the sample spans >= half the line
        pts = np.zeros((10, 3))
        pts[:, 0] = np.arange(10)
        for seed in range(5):
            idx = farthest_point_sample(pts, 3, seed=seed)
            assert 0 in idx or 9 in idx
            assert idx.max() - idx.min() >= 5

    def test_spread_across_clusters(self, rng):
        a = rng.normal(0, 0.1, (20, 3))
        b = rng.normal(0, 0.1, (20, 3)) + [100.0, 0.0, 0.0]
        idx = farthest_point_sample(np.vstack([a, b]), 2)
        assert (idx < 20).sum() == 1 and (idx >= 20).sum() == 1

    def test_validation(self, rng):
        with pytest.raises(InputValidationError):
            farthest_point_sample(rng.uniform(0, 1, (5, 3)), 0)


class TestAutoRadius:
    def test_grid_spacing(self):
        g = np.stack(np.meshgrid(*[np.arange(4) * 0.02] * 3, indexing="ij"), -1)
        pts = g.reshape(-1, 3)
        assert auto_radius(pts) == pytest.approx(5 * 0.02)
        assert auto_radius(pts, factor=2.0) == pytest.approx(2 * 0.02)

    def test_coincident_points_rejected(self):
        with pytest.raises(InputValidationError):
            auto_radius(np.zeros((10, 3)))

    def test_needs_two_points(self):
        with pytest.raises(InputValidationError):
            auto_radius(np.zeros((1, 3)))


class TestComputeDescriptors:
    def test_shape(self, rng):
        pts = rng.uniform(0, 1, (200, 3))
        desc = compute_descriptors(pts, np.arange(10), radius=0.3)
        assert desc.shape == (10, DESCRIPTOR_DIM)

    def test_rigid_motion_invariance(self, rng):
        pts = rng.uniform(0, 1, (200, 3))
        idx = np.arange(0, 200, 7)
        t = random_rigid(rng)
        d0 = compute_descriptors(pts, idx, radius=0.3)
        d1 = compute_descriptors(apply_transform(t, pts), idx, radius=0.3)
        assert np.allclose(d0, d1, atol=1e-8)

    def test_eigen_shares_sum_to_one(self, rng):
        pts = rng.uniform(0, 1, (300, 3))
        desc = compute_descriptors(pts, np.arange(20), radius=0.4)
        nz = np.abs(desc).sum(axis=1) > 0
        assert nz.all()
        assert np.allclose(desc[:, :3].sum(axis=1), 1.0)

    def test_planar_patch(self, rng):
        pts = rng.uniform(0, 1, (400, 3))
        pts[:, 2] = 0.0
        pts[0] = [0.5, 0.5, 0.0]  # keypoint centered so the patch stays isotropic
        desc = compute_descriptors(pts, np.array([0]), radius=0.5)
        lin, plan, sph = desc[0, 3], desc[0, 4], desc[0, 5]
        assert sph == pytest.approx(0.0, abs=1e-12)
        assert plan > 0.5 > lin

    def test_linear_neighborhood(self):
        pts = np.zeros((30, 3))
        pts[:, 0] = np.linspace(0, 1, 30)
        desc = compute_descriptors(pts, np.array([15]), radius=0.3)
        assert desc[0, 3] == pytest.approx(1.0, abs=1e-9)

    def test_isolated_keypoint_gets_zero_row(self, rng):
        pts = np.vstack([rng.normal(0, 0.05, (20, 3)), [[10.0, 10.0, 10.0]]])
        desc = compute_descriptors(pts, np.array([0, 20]), radius=0.5)
        assert np.abs(desc[0]).sum() > 0
        assert np.array_equal(desc[1], np.zeros(DESCRIPTOR_DIM))

    def test_radial_stats_bounded_by_radius(self, rng):
        pts = rng.uniform(0, 1, (300, 3))
        desc = compute_descriptors(pts, np.arange(30), radius=0.25)
        assert (desc[:, 8] <= desc[:, 10]).all()  # mean <= max
        assert (desc[:, 10] <= 1.0 + 1e-12).all()

    def test_default_radius(self, rng):
        pts = rng.uniform(0, 1, (150, 3))
        desc = compute_descriptors(pts, np.arange(5))
        assert np.abs(desc).sum() > 0

    def test_validation(self, rng):
        pts = rng.uniform(0, 1, (10, 3))
        with pytest.raises(InputValidationError):
            compute_descriptors(pts, np.array([10]), radius=0.5)
        with pytest.raises(InputValidationError):
            compute_descriptors(pts, np.array([0]), radius=0.0)


class TestWithKeypoints:
    def test_fully_specified_cloud_passes_through(self, rng):
        pts = rng.uniform(0, 1, (50, 3))
        cloud = PointCloud(
            pts, keypoint_indices=np.arange(5), descriptors=rng.uniform(0, 1, (5, 4))
        )
        assert with_keypoints(cloud) is cloud

    def test_descriptors_added_to_given_keypoints(self, rng):
        pts = rng.uniform(0, 1, (80, 3))
        idx = np.array([3, 11, 40])
        out = with_keypoints(PointCloud(pts, keypoint_indices=idx))
        assert np.array_equal(out.keypoint_indices, idx)
        assert out.descriptors.shape == (3, DESCRIPTOR_DIM)

    def test_bare_cloud_gets_sampled(self, rng):
        pts = rng.uniform(0, 1, (120, 3))
        out = with_keypoints(PointCloud(pts), count=30, seed=4)
        assert out.keypoint_indices.shape == (30,)
        assert out.descriptors.shape == (30, DESCRIPTOR_DIM)
        again = with_keypoints(PointCloud(pts), count=30, seed=4)
        assert np.array_equal(out.keypoint_indices, again.keypoint_indices)
        assert np.array_equal(out.descriptors, again.descriptors)

    def test_count_capped(self, rng):
        pts = rng.uniform(0, 1, (8, 3))
        out = with_keypoints(PointCloud(pts), count=100)
        assert out.keypoint_indices.shape == (8,)
