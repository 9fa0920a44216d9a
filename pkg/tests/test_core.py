import numpy as np
import pytest

from regrefine.core import (
    CorrespondenceSet,
    PointCloud,
    RigidTransform,
    SpatialIndex,
    apply_transform,
    compose,
    invert,
    registration_recall,
    rotation_error,
    translation_error,
)
from regrefine.errors import InputValidationError

from conftest import brute_force_nn, random_rigid


class TestRigidTransform:
    def test_identity(self):
        t = RigidTransform.identity()
        assert np.array_equal(t.rotation, np.eye(3))
        assert np.array_equal(t.translation, np.zeros(3))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InputValidationError):
            RigidTransform(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(InputValidationError):
            RigidTransform(r, np.zeros(3))

    def test_rejects_bad_translation(self):
        with pytest.raises(InputValidationError):
            RigidTransform(np.eye(3), [1.0, 2.0])
        with pytest.raises(InputValidationError):
            RigidTransform(np.eye(3), [1.0, np.nan, 0.0])

    def test_matrix_round_trip(self, rng):
        t = random_rigid(rng)
        back = RigidTransform.from_matrix(t.matrix())
        assert np.allclose(back.rotation, t.rotation, atol=1e-15)
        assert np.allclose(back.translation, t.translation, atol=1e-15)

    def test_from_matrix_validates_shape_and_bottom_row(self):
        with pytest.raises(InputValidationError):
            RigidTransform.from_matrix(np.eye(3))
        bad = np.eye(4)
        bad[3, 0] = 0.5
        with pytest.raises(InputValidationError):
            RigidTransform.from_matrix(bad)

    def test_from_axis_angle_matches_rodrigues(self, rng):
        from scipy.spatial.transform import Rotation

        for _ in range(20):
            axis = rng.standard_normal(3)
            angle = rng.uniform(-np.pi, np.pi)
            t = RigidTransform.from_axis_angle(axis, angle)
            expected = Rotation.from_rotvec(
                angle * axis / np.linalg.norm(axis)
            ).as_matrix()
            assert np.allclose(t.rotation, expected, atol=1e-12)

    def test_from_axis_angle_zero_axis(self):
        with pytest.raises(InputValidationError):
            RigidTransform.from_axis_angle([0, 0, 0], 1.0)

    def test_arrays_are_read_only(self):
        t = RigidTransform.identity()
        with pytest.raises(ValueError):
            t.rotation[0, 0] = 2.0


class TestTransformAlgebra:
    def test_apply_matches_manual(self, rng):
        t = random_rigid(rng)
        pts = rng.standard_normal((50, 3))
        expected = (t.rotation @ pts.T).T + t.translation
        assert np.allclose(apply_transform(t, pts), expected, atol=1e-14)

    def test_compose_order(self, rng):
        a, b = random_rigid(rng), random_rigid(rng)
        pts = rng.standard_normal((20, 3))
        lhs = apply_transform(compose(a, b), pts)
        rhs = apply_transform(a, apply_transform(b, pts))
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_invert(self, rng):
        t = random_rigid(rng)
        pts = rng.standard_normal((20, 3))
        back = apply_transform(invert(t), apply_transform(t, pts))
        assert np.allclose(back, pts, atol=1e-12)

    def test_compose_with_inverse_is_identity(self, rng):
        t = random_rigid(rng)
        ti = compose(t, invert(t))
        assert np.allclose(ti.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(ti.translation, 0.0, atol=1e-12)

    def test_long_composition_stays_orthonormal(self, rng):
        # compose() re-projects when drift accumulates
        t = RigidTransform.identity()
        for _ in range(500):
            t = compose(t, random_rigid(rng))
        assert np.abs(t.rotation.T @ t.rotation - np.eye(3)).max() < 1e-9


class TestErrors:
    def test_rotation_error_known_angle(self):
        for deg in (0.0, 1.0, 17.3, 90.0, 179.0):
            t = RigidTransform.from_axis_angle([0, 0, 1], np.radians(deg))
            assert rotation_error(t, RigidTransform.identity()) == pytest.approx(
                deg, abs=1e-9
            )

    def test_rotation_error_symmetric(self, rng):
        a, b = random_rigid(rng), random_rigid(rng)
        assert rotation_error(a, b) == pytest.approx(rotation_error(b, a), abs=1e-9)

    def test_translation_error(self):
        a = RigidTransform(np.eye(3), [1.0, 2.0, 2.0])
        b = RigidTransform(np.eye(3), [1.0, 0.0, 0.0])
        assert translation_error(a, b) == pytest.approx(np.sqrt(8.0))

    def test_recall_counts_threshold_hits(self, rng):
        gt = random_rigid(rng)
        near = compose(RigidTransform.from_axis_angle([1, 0, 0], np.radians(0.5)), gt)
        far = compose(RigidTransform.from_axis_angle([1, 0, 0], np.radians(40.0)), gt)
        rr = registration_recall([(near, gt), (far, gt), (gt, gt)], 15.0, 0.3)
        assert rr == pytest.approx(2.0 / 3.0)

    def test_recall_validates(self):
        with pytest.raises(InputValidationError):
            registration_recall([], 15.0, 0.3)
        gt = RigidTransform.identity()
        with pytest.raises(InputValidationError):
            registration_recall([(gt, gt)], -1.0, 0.3)


class TestPointCloud:
    def test_default_keypoints_empty(self):
        c = PointCloud(np.zeros((4, 3)))
        assert c.keypoint_indices.size == 0
        assert c.descriptors is None
        assert len(c) == 4

    def test_keypoints_property(self, rng):
        pts = rng.standard_normal((30, 3))
        c = PointCloud(pts, keypoint_indices=[5, 2, 9])
        assert np.array_equal(c.keypoints, pts[[5, 2, 9]])

    def test_rejects_out_of_range_keypoints(self):
        with pytest.raises(InputValidationError):
            PointCloud(np.zeros((4, 3)), keypoint_indices=[4])

    def test_rejects_misaligned_descriptors(self, rng):
        pts = rng.standard_normal((10, 3))
        with pytest.raises(InputValidationError):
            PointCloud(pts, keypoint_indices=[0, 1], descriptors=np.zeros((3, 8)))

    def test_rejects_non_finite_descriptors(self, rng):
        pts = rng.standard_normal((10, 3))
        desc = np.zeros((2, 4))
        desc[1, 2] = np.inf
        with pytest.raises(InputValidationError):
            PointCloud(pts, keypoint_indices=[0, 1], descriptors=desc)

    def test_rejects_bad_points(self):
        with pytest.raises(InputValidationError):
            PointCloud(np.zeros((0, 3)))
        with pytest.raises(InputValidationError):
            PointCloud(np.zeros((5, 2)))


class TestCorrespondenceSet:
    def test_basic(self):
        cs = CorrespondenceSet([[0, 1], [2, 3]], [0.5, 1.0], label="geo3d")
        assert len(cs) == 2
        assert cs.pairs.dtype == np.intp

    def test_rejects_negative_weights(self):
        with pytest.raises(InputValidationError):
            CorrespondenceSet([[0, 1]], [-0.1])

    def test_rejects_length_mismatch(self):
        with pytest.raises(InputValidationError):
            CorrespondenceSet([[0, 1], [2, 3]], [1.0])


class TestSpatialIndex:
    def test_matches_brute_force(self, rng):
        pts = rng.uniform(0, 1, (200, 3))
        queries = rng.uniform(0, 1, (50, 3))
        idx = SpatialIndex(pts)
        got_i, got_d = idx.query_many(queries)
        exp_i, exp_d = brute_force_nn(queries, pts)
        assert np.array_equal(got_i, exp_i)
        assert np.allclose(got_d, exp_d, atol=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        # two points exactly equidistant from the query
        pts = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [5.0, 5.0, 5.0]])
        idx = SpatialIndex(pts)
        i, d = idx.query([0.0, 0.0, 0.0])
        assert i == 0
        assert d == pytest.approx(1.0)

    def test_single_query(self, rng):
        pts = rng.uniform(0, 1, (50, 3))
        idx = SpatialIndex(pts)
        i, d = idx.query(pts[17])
        assert i == 17
        assert d == pytest.approx(0.0, abs=1e-15)

    def test_empty_queries(self, rng):
        idx = SpatialIndex(rng.uniform(0, 1, (10, 3)))
        i, d = idx.query_many(np.zeros((0, 3)))
        assert i.size == 0 and d.size == 0
