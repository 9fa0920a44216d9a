"""End-to-end refinement: two clouds and a coarse transform in, report out.

The stages mirror the library layout: keypoint preparation, cross-view
depth rendering, feature extraction and fusion, candidate banking, robust
selection and reweighting, final top-K solve. Every stage degrades
gracefully; with no usable appearance features the geometric descriptor
matches alone drive the result, and with nothing usable at all the
initial transform passes through flagged degraded.
"""

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator

from .aggregation import INIT_FALLBACK_LABEL, finalize_topk, reweight_details, select_best
from .backend import FeatureRequest, get_provider
from .config import PipelineConfig, default_config
from .core import PointCloud, RigidTransform, apply_transform
from .correspondence import SideFeatures, build_candidate_bank, find_common_points
from .descriptors import with_keypoints
from .errors import EmptyRenderError, InputValidationError
from .features import (
    PointFeatures,
    aggregate_layer_pairs,
    aggregate_layers,
    fuse_features,
    sample_at_pixels,
)
from .projection import backproject_with_pixels, densify_depth, make_view_pairs
from .report import RefineReport, StageTimer
from .validation import check_points


def as_cloud(obj) -> PointCloud:
    if isinstance(obj, PointCloud):
        return obj
    return PointCloud(check_points(obj, "points"))


def _as_transform(t) -> RigidTransform:
    if t is None:
        return RigidTransform.identity()
    if isinstance(t, RigidTransform):
        return t
    return RigidTransform.from_matrix(np.asarray(t, dtype=np.float64))


def _attach(side: SideFeatures, view: str, diff, fused):
    if view == "ref":
        side.diff_ref, side.fused_ref = diff, fused
    else:
        side.diff_src, side.fused_src = diff, fused


def _view_side_features(vr, p, q, p_side, q_side, cfg, provider, pair_id):
    """Fill one view's diffusion and fused features into both sides."""
    dense = {}
    commons = {}
    maps = {}
    for name, cloud, to_view, depth in (
        ("p", p, vr.p_to_view, vr.depth_p),
        ("q", q, vr.q_to_view, vr.depth_q),
    ):
        dense[name] = densify_depth(depth, cfg.densify_kernel, cfg.densify_passes)
        cam_xyz, pix = backproject_with_pixels(depth)
        kp_cam = apply_transform(vr.pose, apply_transform(to_view, cloud.keypoints))
        commons[name] = find_common_points(
            kp_cam, cam_xyz, cfg.common_threshold, pix, side=name, view=vr.view
        )
        maps[name] = provider(
            FeatureRequest(pair_id, vr.view, name, cfg.layers, dense[name].depth)
        )
    if not maps["p"] or not maps["q"] or not len(commons["p"]) or not len(commons["q"]):
        return
    out_dim = min(cfg.pca_dim, min(m.data.shape[2] for m in maps["p"] + maps["q"]))
    if cfg.joint_pca:
        agg = dict(zip(("p", "q"), aggregate_layer_pairs(maps["p"], maps["q"], out_dim)))
    else:
        agg = {n: aggregate_layers(maps[n], out_dim) for n in ("p", "q")}
    for name, side, cloud in (("p", p_side, p), ("q", q_side, q)):
        com = commons[name]
        vec = sample_at_pixels(agg[name], com.pixels, dense[name].shape)
        diff = PointFeatures(com.keypoint_positions, vec)
        geo_sub = PointFeatures(
            com.keypoint_positions, cloud.descriptors[com.keypoint_positions]
        )
        _attach(side, vr.view, diff, fuse_features(geo_sub, diff))


def run_refine(reference, source, t_init=None, cfg: PipelineConfig | None = None,
               provider=None, pair_id: str = "pair",
               upstream=None) -> RefineReport:
    """Refine the source-to-reference transform for one cloud pair.

    ``upstream`` optionally carries externally matched correspondences for
    the geometric candidate set; otherwise descriptors are matched here.
    """
    cfg = cfg if cfg is not None else default_config()
    t_init = _as_transform(t_init)
    if provider is None:
        provider = get_provider(cfg.provider, root=cfg.feature_dir or None)
    timer = StageTimer()
    with timer.stage("prepare"):
        p = with_keypoints(as_cloud(reference), cfg.n_keypoints, seed=cfg.seed)
        q = with_keypoints(as_cloud(source), cfg.n_keypoints, seed=cfg.seed + 1)
    k = cfg.intrinsics()
    p_side = SideFeatures(
        geo=PointFeatures(np.arange(len(p.keypoints), dtype=np.intp), p.descriptors)
    )
    q_side = SideFeatures(
        geo=PointFeatures(np.arange(len(q.keypoints), dtype=np.intp), q.descriptors)
    )
    degraded_sources = []
    views = ()
    with timer.stage("render"):
        try:
            views = make_view_pairs(p, q, t_init, k, margin=cfg.frame_margin)
        except EmptyRenderError:
            degraded_sources.append("render")
    with timer.stage("features"):
        for vr in views:
            _view_side_features(vr, p, q, p_side, q_side, cfg, provider, pair_id)
    acfg = cfg.aggregation()
    with timer.stage("select"):
        bank = build_candidate_bank(p_side, q_side, upstream=upstream,
                                    mode=cfg.match_mode)
        t_sel, label = select_best(bank, p.keypoints, q.keypoints, acfg, t_init=t_init)
        union, union_w = bank.union_pairs()
        src = q.keypoints[union[:, 1]] if union.size else np.zeros((0, 3))
        dst = p.keypoints[union[:, 0]] if union.size else np.zeros((0, 3))
    with timer.stage("refine"):
        t_best, _, trace, _ = reweight_details(t_sel, src, dst, union_w, acfg)
        result = finalize_topk(t_best, src, dst, union_w, acfg,
                               winning_set=label, inlier_trace=trace)
    return RefineReport(
        pair_id=pair_id,
        transform=result.transform,
        initial_transform=t_init,
        winning_set=label,
        inlier_count=result.inlier_count,
        inlier_trace=result.inlier_trace,
        degraded=result.degraded or label == INIT_FALLBACK_LABEL,
        degraded_sources=degraded_sources + list(bank.degraded),
        set_sizes={lbl: len(bank[lbl]) for lbl in bank.sets},
        timings=timer.timings,
    )


def _job(args):
    pair_id, reference, source, t_init, cfg, provider = args
    return run_refine(reference, source, t_init, cfg, provider=provider,
                      pair_id=pair_id)


def refine_many(jobs, cfg: PipelineConfig | None = None, provider=None,
                workers: int | None = None):
    """Refine a batch of (pair_id, reference, source, t_init) jobs.

    Results come back in job order. With workers > 1 the pairs run in a
    process pool; each job is independent, so the outputs are identical
    either way.
    """
    cfg = cfg if cfg is not None else default_config()
    workers = cfg.workers if workers is None else workers
    if workers < 1:
        raise InputValidationError("workers must be >= 1")
    packed = [(pid, r, s, t, cfg, provider) for pid, r, s, t in jobs]
    if workers == 1 or len(packed) <= 1:
        return [_job(a) for a in packed]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_job, packed))


# Config keys the estimator exposes verbatim as hyperparameters.
_ESTIMATOR_PARAMS = (
    "provider", "feature_dir", "layers", "pca_dim", "joint_pca",
    "common_threshold", "match_mode", "n_keypoints", "tau_a", "nr",
    "nr_final", "k_final", "min_pairs", "seed",
)


class RegistrationRefiner(BaseEstimator):
    """Estimator wrapper around the refinement pipeline.

    fit takes ``X = (reference, source)`` (arrays or PointClouds) and an
    optional initial transform ``y`` (RigidTransform or 4x4 matrix,
    identity when omitted). After fitting, ``transform_`` holds the
    refined source-to-reference motion and ``report_`` the full result;
    predict/transform apply it to source-frame points. Parameters left at
    None inherit the profile default.
    """

    def __init__(self, profile="indoor", provider=None, feature_dir=None,
                 layers=None, pca_dim=None, joint_pca=None,
                 common_threshold=None, match_mode=None, n_keypoints=None,
                 tau_a=None, nr=None, nr_final=None, k_final=None,
                 min_pairs=None, seed=None):
        self.profile = profile
        self.provider = provider
        self.feature_dir = feature_dir
        self.layers = layers
        self.pca_dim = pca_dim
        self.joint_pca = joint_pca
        self.common_threshold = common_threshold
        self.match_mode = match_mode
        self.n_keypoints = n_keypoints
        self.tau_a = tau_a
        self.nr = nr
        self.nr_final = nr_final
        self.k_final = k_final
        self.min_pairs = min_pairs
        self.seed = seed

    def _config(self) -> PipelineConfig:
        base = default_config(self.profile).to_dict()
        for name in _ESTIMATOR_PARAMS:
            value = getattr(self, name)
            if value is not None:
                base[name] = value
        return PipelineConfig(**base)

    def fit(self, X, y=None):
        try:
            reference, source = X
        except (TypeError, ValueError):
            raise InputValidationError(
                "X must be a (reference, source) pair of point clouds"
            ) from None
        self.report_ = run_refine(reference, source, _as_transform(y),
                                  cfg=self._config())
        self.transform_ = self.report_.transform
        self.n_features_in_ = 3
        return self

    def predict(self, X) -> np.ndarray:
        """Map source-frame points into the reference frame."""
        if not hasattr(self, "transform_"):
            raise InputValidationError("estimator is not fitted yet")
        return apply_transform(self.transform_, check_points(X, "points"))

    def transform(self, X) -> np.ndarray:
        return self.predict(X)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).predict(as_cloud(X[1]).points)
