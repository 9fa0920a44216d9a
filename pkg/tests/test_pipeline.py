import numpy as np
import pytest
from sklearn.base import clone

from regrefine.aggregation import residuals
from regrefine.backend import NullProvider, get_provider
from regrefine.config import PipelineConfig, default_config
from regrefine.core import (
    CorrespondenceSet,
    PointCloud,
    RigidTransform,
    apply_transform,
    rotation_error,
    translation_error,
)
from regrefine.correspondence import (
    BANK_LABELS,
    SideFeatures,
    build_candidate_bank,
)
from regrefine.descriptors import with_keypoints
from regrefine.errors import InputValidationError
from regrefine.features import PointFeatures
from regrefine.pipeline import (
    RegistrationRefiner,
    _view_side_features,
    refine_many,
    run_refine,
)
from regrefine.projection import make_view_pairs
from regrefine.scenes import generate_scene


STAGE_NAMES = {"prepare", "render", "features", "select", "refine"}


@pytest.fixture(scope="module")
def scene():
    return generate_scene(0, n_points=2000)


class TestRunRefine:
    def test_improves_over_init(self, scene):
        rep = run_refine(scene.p, scene.q, scene.t_init, pair_id="s0")
        re0 = rotation_error(scene.t_init, scene.t_gt)
        te0 = translation_error(scene.t_init, scene.t_gt)
        assert rotation_error(rep.transform, scene.t_gt) < re0
        assert translation_error(rep.transform, scene.t_gt) < te0
        assert not rep.degraded
        assert rep.winning_set in BANK_LABELS
        assert rep.pair_id == "s0"
        assert set(rep.set_sizes) == set(BANK_LABELS)
        assert STAGE_NAMES <= set(rep.timings)
        assert rep.inlier_count >= 3
        assert rep.inlier_count == rep.inlier_trace[-1]

    def test_ground_truth_init_stays_accurate(self, scene):
        rep = run_refine(scene.p, scene.q, scene.t_gt)
        assert rotation_error(rep.transform, scene.t_gt) <= 0.5
        assert translation_error(rep.transform, scene.t_gt) <= 0.01

    def test_identity_init_default(self, scene):
        rep = run_refine(scene.p, scene.q)
        assert np.array_equal(rep.initial_transform.matrix(), np.eye(4))

    def test_matrix_init_equivalent(self, scene):
        a = run_refine(scene.p, scene.q, scene.t_init)
        b = run_refine(scene.p, scene.q, scene.t_init.matrix())
        assert a.to_json(include_timing=False) == b.to_json(include_timing=False)

    def test_deterministic_reports(self, scene):
        a = run_refine(scene.p, scene.q, scene.t_init)
        b = run_refine(scene.p, scene.q, scene.t_init)
        assert a.to_json(include_timing=False) == b.to_json(include_timing=False)

    def test_geometry_only_provider(self, scene):
        cfg = default_config()
        cfg.provider = "none"
        rep = run_refine(scene.p, scene.q, scene.t_init, cfg=cfg)
        assert rep.winning_set == "geo3d"
        assert not rep.degraded
        # the four appearance sets came out empty and say so
        assert set(rep.degraded_sources) == set(BANK_LABELS) - {"geo3d"}
        for label in set(BANK_LABELS) - {"geo3d"}:
            assert rep.set_sizes[label] == 0

    def test_provider_instance_overrides_config(self, scene):
        rep = run_refine(scene.p, scene.q, scene.t_init, provider=NullProvider())
        assert rep.winning_set == "geo3d"

    def test_featureless_inputs_fall_back_to_init(self, rng):
        pts_p = rng.uniform(0, 1, (200, 3))
        pts_q = rng.uniform(0, 1, (200, 3))
        idx = np.arange(50)
        zero_desc = np.zeros((50, 12))
        p = PointCloud(pts_p, keypoint_indices=idx, descriptors=zero_desc)
        q = PointCloud(pts_q, keypoint_indices=idx, descriptors=zero_desc)
        cfg = default_config()
        cfg.provider = "none"
        t_init = RigidTransform.identity()
        rep = run_refine(p, q, t_init, cfg=cfg)
        assert rep.degraded
        assert rep.winning_set == "init"
        assert rep.inlier_count == 0
        assert np.array_equal(rep.transform.matrix(), t_init.matrix())

    def test_render_failure_degrades_not_crashes(self, rng):
        pts = rng.uniform(0, 1, (300, 3))
        # init throws the source a kilometer away: no shared frustum exists
        t_init = RigidTransform(np.eye(3), np.array([1e6, 0.0, 0.0]))
        rep = run_refine(pts, pts.copy(), t_init)
        assert "render" in rep.degraded_sources
        assert rep.winning_set == "geo3d"
        # identical clouds still register through raw descriptors
        assert rotation_error(rep.transform, RigidTransform.identity()) < 0.5
        assert translation_error(rep.transform, RigidTransform.identity()) < 0.01

    def test_upstream_pairs_pass_through(self, scene):
        cfg = default_config()
        cfg.provider = "none"
        p = with_keypoints(scene.p, cfg.n_keypoints, seed=cfg.seed)
        q = with_keypoints(scene.q, cfg.n_keypoints, seed=cfg.seed + 1)
        mapped = apply_transform(scene.t_gt, q.keypoints)
        d = np.linalg.norm(p.keypoints[:, None] - mapped[None], axis=2)
        rows = np.arange(d.shape[0])
        cols = d.argmin(axis=1)
        ok = d[rows, cols] < 0.02
        upstream = CorrespondenceSet(
            np.column_stack([rows[ok], cols[ok]]), np.ones(int(ok.sum()))
        )
        rep = run_refine(scene.p, scene.q, scene.t_init, cfg=cfg, upstream=upstream)
        assert rep.set_sizes["geo3d"] == len(upstream)
        assert rep.winning_set == "geo3d"
        assert rotation_error(rep.transform, scene.t_gt) < 0.5


class TestCommonSetsVsRawGeometry:
    def test_visibility_restriction_raises_inlier_ratio(self):
        # Keypoints sampled over the whole clouds: raw descriptor matches
        # can pair non-covisible regions, the common sets cannot.
        scene = generate_scene(5, n_points=2000)
        cfg = default_config()
        p = with_keypoints(PointCloud(scene.p.points), cfg.n_keypoints, seed=cfg.seed)
        q = with_keypoints(PointCloud(scene.q.points), cfg.n_keypoints, seed=cfg.seed + 1)
        p_side = SideFeatures(
            geo=PointFeatures(np.arange(len(p.keypoints), dtype=np.intp), p.descriptors)
        )
        q_side = SideFeatures(
            geo=PointFeatures(np.arange(len(q.keypoints), dtype=np.intp), q.descriptors)
        )
        provider = get_provider("synthetic")
        views = make_view_pairs(p, q, scene.t_gt, cfg.intrinsics(), margin=cfg.frame_margin)
        for vr in views:
            _view_side_features(vr, p, q, p_side, q_side, cfg, provider, "probe")
        bank = build_candidate_bank(p_side, q_side, mode=cfg.match_mode)

        def inlier_ratio(label):
            cs = bank[label]
            assert len(cs) > 0
            r = residuals(
                scene.t_gt, q.keypoints[cs.pairs[:, 1]], p.keypoints[cs.pairs[:, 0]]
            )
            return float((r < cfg.tau_a).mean())

        geo = inlier_ratio("geo3d")
        assert inlier_ratio("common_ref") >= geo
        assert inlier_ratio("common_src") >= geo


class TestRefineMany:
    def test_order_preserved(self):
        scenes = [generate_scene(s, n_points=2000) for s in (0, 1)]
        jobs = [(f"s{i}", sc.p, sc.q, sc.t_init) for i, sc in enumerate(scenes)]
        reports = refine_many(jobs)
        assert [r.pair_id for r in reports] == ["s0", "s1"]

    def test_parallel_matches_serial(self):
        scenes = [generate_scene(s, n_points=2000) for s in (0, 1)]
        jobs = [(f"s{i}", sc.p, sc.q, sc.t_init) for i, sc in enumerate(scenes)]
        serial = refine_many(jobs, workers=1)
        parallel = refine_many(jobs, workers=2)
        for a, b in zip(serial, parallel):
            assert a.to_json(include_timing=False) == b.to_json(include_timing=False)

    def test_workers_validation(self, scene):
        with pytest.raises(InputValidationError):
            refine_many([("a", scene.p, scene.q, None)], workers=0)

    def test_empty_job_list(self):
        assert refine_many([]) == []


class TestEstimator:
    def test_fit_predict_cycle(self, scene):
        est = RegistrationRefiner()
        out = est.fit((scene.p, scene.q), scene.t_init)
        assert out is est
        assert est.n_features_in_ == 3
        assert rotation_error(est.transform_, scene.t_gt) < rotation_error(
            scene.t_init, scene.t_gt
        )
        mapped = est.predict(scene.q.points)
        assert np.allclose(
            mapped, apply_transform(est.transform_, scene.q.points), atol=1e-12
        )
        assert np.array_equal(est.transform(scene.q.points), mapped)

    def test_fit_predict_shortcut(self, scene):
        est = RegistrationRefiner()
        mapped = est.fit_predict((scene.p, scene.q), scene.t_init)
        assert mapped.shape == scene.q.points.shape

    def test_report_attached(self, scene):
        est = RegistrationRefiner().fit((scene.p, scene.q), scene.t_init)
        assert est.report_.winning_set in BANK_LABELS
        assert est.transform_ is est.report_.transform

    def test_unfitted_predict_raises(self, rng):
        with pytest.raises(InputValidationError):
            RegistrationRefiner().predict(rng.uniform(0, 1, (5, 3)))

    def test_invalid_fit_input(self, scene):
        with pytest.raises(InputValidationError):
            RegistrationRefiner().fit(42)
        with pytest.raises(InputValidationError):
            RegistrationRefiner().fit((scene.p, scene.q, scene.p))

    def test_get_set_params(self):
        est = RegistrationRefiner(tau_a=0.2, nr=3)
        params = est.get_params()
        assert params["tau_a"] == 0.2
        assert params["nr"] == 3
        assert params["profile"] == "indoor"
        est.set_params(tau_a=0.4)
        assert est.tau_a == 0.4

    def test_clone_compatible(self):
        est = RegistrationRefiner(profile="outdoor", k_final=300)
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_none_params_inherit_profile(self):
        cfg = RegistrationRefiner(profile="outdoor")._config()
        assert cfg.tau_a == 0.60
        assert cfg.n_keypoints == 1000
        cfg2 = RegistrationRefiner(profile="outdoor", tau_a=0.2)._config()
        assert cfg2.tau_a == 0.2
        assert cfg2.n_keypoints == 1000

    def test_matrix_init_accepted(self, scene):
        est = RegistrationRefiner().fit((scene.p, scene.q), scene.t_init.matrix())
        assert rotation_error(est.transform_, scene.t_gt) < 5.0
