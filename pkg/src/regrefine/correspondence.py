"""Common-point discovery and feature-similarity matching.

Five candidate correspondence sets are assembled per cloud pair: fused
(geometric + view) features at common points from each view, view-only
features at those same points, and the plain geometric-descriptor matches.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import CorrespondenceSet, SpatialIndex
from .errors import InputValidationError
from .features import PointFeatures, l2_normalize_rows

# Fixed label order; also the tie-break priority used by transform selection.
BANK_LABELS = ("common_ref", "common_src", "diffu_ref", "diffu_src", "geo3d")


@dataclass
class CommonPointSet:
    """Keypoints that also carry a view feature (lie near a rendered pixel).

    ``keypoint_positions`` index the keypoint list; ``projected_indices``
    map each member to its row in the backprojected pixel list (the
    pixel-feature index); ``pixels`` holds the matched (v, u) coordinates.
    """

    keypoint_positions: np.ndarray
    projected_indices: np.ndarray
    pixels: np.ndarray
    distances: np.ndarray
    side: str = ""
    view: str = ""

    def __post_init__(self):
        self.keypoint_positions = np.asarray(self.keypoint_positions, dtype=np.intp)
        self.projected_indices = np.asarray(self.projected_indices, dtype=np.intp)
        self.pixels = np.asarray(self.pixels, dtype=np.intp).reshape(-1, 2)
        self.distances = np.asarray(self.distances, dtype=np.float64)
        if len({self.keypoint_positions.shape[0], self.projected_indices.shape[0],
                self.pixels.shape[0], self.distances.shape[0]}) != 1:
            raise InputValidationError("common point set arrays must be row-aligned")
        if np.unique(self.keypoint_positions).size != self.keypoint_positions.size:
            raise InputValidationError("duplicate keypoint in common point set")

    def __len__(self):
        return self.keypoint_positions.shape[0]


def find_common_points(
    keypoints_xyz,
    projected_xyz,
    thresh: float,
    projected_pixels=None,
    side: str = "",
    view: str = "",
) -> CommonPointSet:
    """Keypoints whose nearest backprojected pixel point lies within thresh.

    Both point sets must be expressed in the same frame. Returns an empty
    set when nothing is close enough.
    """
    if thresh <= 0:
        raise InputValidationError("common-point threshold must be positive")
    keypoints_xyz = np.asarray(keypoints_xyz, dtype=np.float64).reshape(-1, 3)
    projected_xyz = np.asarray(projected_xyz, dtype=np.float64).reshape(-1, 3)
    if keypoints_xyz.shape[0] == 0 or projected_xyz.shape[0] == 0:
        empty = np.zeros(0, dtype=np.intp)
        return CommonPointSet(empty, empty, np.zeros((0, 2), dtype=np.intp),
                              np.zeros(0), side, view)
    index = SpatialIndex(projected_xyz)
    nn_idx, nn_dist = index.query_many(keypoints_xyz)
    members = np.flatnonzero(nn_dist <= thresh)
    proj = nn_idx[members]
    if projected_pixels is None:
        pixels = np.full((members.size, 2), -1, dtype=np.intp)
    else:
        pixels = np.asarray(projected_pixels, dtype=np.intp).reshape(-1, 2)[proj]
    return CommonPointSet(members, proj, pixels, nn_dist[members], side, view)


def match_features(fa: PointFeatures, fb: PointFeatures, mode: str = "mutual") -> CorrespondenceSet:
    """Cosine-similarity nearest-neighbor matching between two feature sets.

    Pairs are reported in the inputs' point-index domain; weights are
    (1 + cosine) / 2. Mutual mode keeps reciprocal best matches only.
    All-zero (featureless) rows never match. Ties resolve to the lowest
    index because argmax returns the first maximum.
    """
    if mode not in ("mutual", "one-way"):
        raise InputValidationError(f"unknown matching mode {mode!r}")
    if len(fa) == 0 or len(fb) == 0:
        raise InputValidationError("match_features requires non-empty feature sets")
    if fa.dim != fb.dim:
        raise InputValidationError(
            f"feature dimension mismatch: {fa.dim} != {fb.dim}"
        )
    na = l2_normalize_rows(fa.vectors)
    nb = l2_normalize_rows(fb.vectors)
    ok_a = np.linalg.norm(na, axis=1) > 0
    ok_b = np.linalg.norm(nb, axis=1) > 0
    if not ok_a.any() or not ok_b.any():
        return CorrespondenceSet(np.zeros((0, 2), dtype=np.intp), np.zeros(0))
    rows = np.flatnonzero(ok_a)
    cols = np.flatnonzero(ok_b)
    sim = na[rows] @ nb[cols].T
    best_b = np.argmax(sim, axis=1)
    if mode == "mutual":
        best_a = np.argmax(sim, axis=0)
        keep = best_a[best_b] == np.arange(rows.size)
    else:
        keep = np.ones(rows.size, dtype=bool)
    ai = np.flatnonzero(keep)
    bi = best_b[ai]
    pairs = np.column_stack([fa.indices[rows[ai]], fb.indices[cols[bi]]])
    weights = np.clip((1.0 + sim[ai, bi]) / 2.0, 0.0, 1.0)
    return CorrespondenceSet(pairs, weights)


@dataclass
class SideFeatures:
    """All feature sets for one cloud, in keypoint-position index space."""

    geo: PointFeatures
    diff_ref: PointFeatures | None = None
    diff_src: PointFeatures | None = None
    fused_ref: PointFeatures | None = None
    fused_src: PointFeatures | None = None


@dataclass
class CandidateBank:
    """The five candidate correspondence sets, keyed by BANK_LABELS.

    ``degraded`` lists the labels that came out empty because their inputs
    were absent or unmatchable; geo3d is always built.
    """

    sets: dict
    degraded: list = field(default_factory=list)

    def __post_init__(self):
        if tuple(self.sets.keys()) != BANK_LABELS:
            raise InputValidationError(f"bank must hold exactly the sets {BANK_LABELS}")

    def __getitem__(self, label):
        return self.sets[label]

    def union_pairs(self):
        """Deduplicated union of all five sets.

        A pair appearing in several sets keeps its maximum weight (best
        available evidence). Rows are sorted by (first, second) index.
        """
        merged = {}
        for label in BANK_LABELS:
            cs = self.sets[label]
            for (i, j), w in zip(cs.pairs, cs.weights):
                key = (int(i), int(j))
                if key not in merged or w > merged[key]:
                    merged[key] = float(w)
        if not merged:
            return np.zeros((0, 2), dtype=np.intp), np.zeros(0)
        keys = sorted(merged)
        pairs = np.asarray(keys, dtype=np.intp)
        weights = np.asarray([merged[k] for k in keys])
        return pairs, weights


def _empty_set():
    return CorrespondenceSet(np.zeros((0, 2), dtype=np.intp), np.zeros(0))


def _match_or_empty(fa, fb, mode):
    if fa is None or fb is None or len(fa) == 0 or len(fb) == 0:
        return None
    cs = match_features(fa, fb, mode=mode)
    return cs if len(cs) else None


def build_candidate_bank(
    p: SideFeatures,
    q: SideFeatures,
    upstream: CorrespondenceSet | None = None,
    mode: str = "mutual",
) -> CandidateBank:
    """Assemble the five correspondence sets from both sides' features.

    Absent view features yield empty, degraded-tagged sets. The geometric
    set passes upstream correspondences through unchanged when provided,
    otherwise it is matched from the raw descriptors.
    """
    if p.geo is None or q.geo is None or len(p.geo) == 0 or len(q.geo) == 0:
        raise InputValidationError("geometric descriptors are required on both sides")
    sets = {}
    degraded = []
    for label, fa, fb in (
        ("common_ref", p.fused_ref, q.fused_ref),
        ("common_src", p.fused_src, q.fused_src),
        ("diffu_ref", p.diff_ref, q.diff_ref),
        ("diffu_src", p.diff_src, q.diff_src),
    ):
        cs = _match_or_empty(fa, fb, mode)
        if cs is None:
            sets[label] = _empty_set()
            degraded.append(label)
        else:
            sets[label] = cs
    if upstream is not None:
        sets["geo3d"] = upstream
    else:
        sets["geo3d"] = match_features(p.geo, q.geo, mode=mode)
    for label in BANK_LABELS:
        sets[label].label = label
    return CandidateBank({label: sets[label] for label in BANK_LABELS}, degraded)
