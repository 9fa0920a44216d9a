"""Robust transform estimation from banked correspondences.

Per candidate set a closed-form weighted least-squares rigid transform is
computed; the transform admitting the most inliers over the union of all
sets wins, is refined by iterative confidence reweighting, and a final
solve on the top-K surviving correspondences produces the result.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import RigidTransform
from .correspondence import BANK_LABELS, CandidateBank
from .errors import EstimationError, InputValidationError
from .validation import check_points, check_weights

INIT_FALLBACK_LABEL = "init"


@dataclass(frozen=True)
class AggregationConfig:
    tau_a: float = 0.10  # acceptance radius, meters
    nr: int = 5  # reweighting rounds
    k_final: int = 250  # correspondences kept for the final solve
    min_pairs: int = 3
    nr_final: int = 0  # optional extra reweighting rounds on the top-K subset

    def __post_init__(self):
        if not np.isfinite(self.tau_a) or self.tau_a <= 0:
            raise InputValidationError("tau_a must be positive")
        if self.nr < 0 or self.nr_final < 0:
            raise InputValidationError("reweighting rounds must be >= 0")
        if self.k_final < 3:
            raise InputValidationError("k_final must be >= 3")
        if self.min_pairs < 3:
            raise InputValidationError("min_pairs must be >= 3")


@dataclass
class RefinementResult:
    transform: RigidTransform
    inlier_count: int
    winning_set: str
    inlier_trace: list = field(default_factory=list)
    degraded: bool = False


def weighted_svd(src_pts, dst_pts, weights=None) -> RigidTransform:
    """Closed-form minimizer of sum(w * ||R @ src + t - dst||^2).

    Weighted Kabsch: weighted centroids, weighted cross-covariance, SVD with
    determinant correction so the result is a proper rotation.
    """
    src = check_points(src_pts, "source pairs", allow_empty=True)
    dst = check_points(dst_pts, "destination pairs", allow_empty=True)
    if src.shape != dst.shape:
        raise InputValidationError("pair arrays must have matching shapes")
    n = src.shape[0]
    if weights is None:
        weights = np.ones(n)
    w = check_weights(weights, n)
    effective = int(np.count_nonzero(w > 0))
    if effective < 3:
        raise EstimationError(
            f"need at least 3 pairs with positive weight, got {effective}"
        )
    total = w.sum()
    src_c = (w[:, None] * src).sum(axis=0) / total
    dst_c = (w[:, None] * dst).sum(axis=0) / total
    a = src - src_c
    b = dst - dst_c
    h = (w[:, None] * a).T @ b
    u, s, vt = np.linalg.svd(h)
    scale = max(s[0], 1e-300)
    if s[1] / scale < 1e-9:
        raise EstimationError(
            "degenerate pair configuration (collinear or coincident points)"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, dst_c - r @ src_c)


def residuals(t: RigidTransform, src_pts, dst_pts) -> np.ndarray:
    """Per-pair alignment error ||R @ src + t - dst||."""
    src = np.asarray(src_pts, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst_pts, dtype=np.float64).reshape(-1, 3)
    return np.linalg.norm(src @ t.rotation.T + t.translation - dst, axis=1)


def count_inliers(t: RigidTransform, src_pts, dst_pts, tau_a: float) -> int:
    """Pairs with residual strictly below the acceptance radius."""
    if tau_a <= 0:
        raise InputValidationError("tau_a must be positive")
    if np.asarray(src_pts).size == 0:
        return 0
    return int(np.count_nonzero(residuals(t, src_pts, dst_pts) < tau_a))


def reweight_kernel(weights, res, tau_a: float) -> np.ndarray:
    """Gaussian down-weighting of residuals; non-inliers get zero.

    sigma is tau_a / 3 so the kernel is nearly exhausted at the acceptance
    boundary; the prior confidence multiplies in.
    """
    sigma = tau_a / 3.0
    w = np.asarray(weights, dtype=np.float64) * np.exp(-(res**2) / (2.0 * sigma**2))
    w[res >= tau_a] = 0.0
    return w


def select_best(bank: CandidateBank, p_xyz, q_xyz, cfg: AggregationConfig,
                t_init: RigidTransform | None = None):
    """Solve each eligible set and keep the transform with most union inliers.

    Correspondence pairs are (reference index, source index) into the two
    coordinate tables; the fitted transform maps source into reference.
    Ties break by the fixed set priority (BANK_LABELS order). With no
    eligible set the initial transform is passed through under the label
    ``init``.
    """
    p_xyz = check_points(p_xyz, "reference keypoints")
    q_xyz = check_points(q_xyz, "source keypoints")
    eval_pairs, _ = bank.union_pairs()
    candidates = []
    for label in BANK_LABELS:
        cs = bank[label]
        if len(cs) < cfg.min_pairs or np.count_nonzero(cs.weights > 0) < cfg.min_pairs:
            continue
        try:
            t = weighted_svd(q_xyz[cs.pairs[:, 1]], p_xyz[cs.pairs[:, 0]], cs.weights)
        except EstimationError:
            continue  # degenerate set: drop it, keep going
        candidates.append((label, t))
    if not candidates:
        if t_init is None:
            raise EstimationError("no candidate set is eligible and no fallback given")
        return t_init, INIT_FALLBACK_LABEL
    src = q_xyz[eval_pairs[:, 1]]
    dst = p_xyz[eval_pairs[:, 0]]
    best_label, best_t = candidates[0]
    best_count = count_inliers(best_t, src, dst, cfg.tau_a)
    for label, t in candidates[1:]:
        c = count_inliers(t, src, dst, cfg.tau_a)
        if c > best_count:
            best_label, best_t, best_count = label, t, c
    return best_t, best_label


def reweight_details(t0: RigidTransform, src_pts, dst_pts, weights,
                     cfg: AggregationConfig):
    """Iterative reweighting loop with full bookkeeping.

    Returns (best transform, its inlier count, per-round inlier trace,
    exhausted flag). Best-so-far tracking guarantees the returned inlier
    count is >= the input's.
    """
    src = check_points(src_pts, "source pairs", allow_empty=True)
    dst = check_points(dst_pts, "destination pairs", allow_empty=True)
    w0 = check_weights(weights, src.shape[0])
    best_t = t0
    best_count = count_inliers(t0, src, dst, cfg.tau_a)
    trace = [best_count]
    t = t0
    exhausted = False
    for _ in range(cfg.nr):
        w = reweight_kernel(w0, residuals(t, src, dst), cfg.tau_a)
        if np.count_nonzero(w > 0) < cfg.min_pairs:
            exhausted = True
            break
        try:
            t = weighted_svd(src, dst, w)
        except EstimationError:
            exhausted = True
            break
        c = count_inliers(t, src, dst, cfg.tau_a)
        trace.append(c)
        if c > best_count:
            best_t, best_count = t, c
    return best_t, best_count, trace, exhausted


def reweight_iterate(t0: RigidTransform, src_pts, dst_pts, weights,
                     cfg: AggregationConfig) -> RigidTransform:
    """Refine a transform by cfg.nr rounds of confidence reweighting."""
    best_t, _, _, _ = reweight_details(t0, src_pts, dst_pts, weights, cfg)
    return best_t


def finalize_topk(t: RigidTransform, src_pts, dst_pts, weights,
                  cfg: AggregationConfig, winning_set: str = "",
                  inlier_trace=None) -> RefinementResult:
    """Final solve on the K highest-scoring inlier correspondences.

    Scores are the prior confidences reweighted at ``t``. With fewer than
    3 inliers the input transform is returned flagged degraded.
    """
    src = check_points(src_pts, "source pairs", allow_empty=True)
    dst = check_points(dst_pts, "destination pairs", allow_empty=True)
    w0 = check_weights(weights, src.shape[0])
    trace = list(inlier_trace) if inlier_trace is not None else []
    res = residuals(t, src, dst) if src.shape[0] else np.zeros(0)
    w_cur = reweight_kernel(w0, res, cfg.tau_a) if src.shape[0] else np.zeros(0)
    inliers = np.flatnonzero(res < cfg.tau_a) if src.shape[0] else np.zeros(0, dtype=int)
    if inliers.size < 3:
        return RefinementResult(t, int(inliers.size), winning_set, trace, degraded=True)
    order = inliers[np.lexsort((inliers, -w_cur[inliers]))]
    top = order[: min(cfg.k_final, order.size)]
    try:
        t_final = weighted_svd(src[top], dst[top], w_cur[top])
    except EstimationError:
        return RefinementResult(t, int(inliers.size), winning_set, trace, degraded=True)
    if cfg.nr_final > 0:
        extra = AggregationConfig(cfg.tau_a, cfg.nr_final, cfg.k_final, cfg.min_pairs)
        t_final, _, _, _ = reweight_details(t_final, src[top], dst[top], w_cur[top], extra)
    final_count = count_inliers(t_final, src, dst, cfg.tau_a)
    trace.append(final_count)
    return RefinementResult(t_final, final_count, winning_set, trace, degraded=False)
