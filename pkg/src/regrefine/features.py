"""Post-processing of dense feature grids and the per-point feature algebra.

Provider feature maps are PCA-reduced per layer, bilinearly upsampled to a
common resolution, concatenated, sampled at depth pixels, and finally fused
with geometric descriptors by per-half L2 normalization + concatenation.

All resampling in this module is corner-aligned.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputValidationError


@dataclass
class FeatureMap:
    """H x W x C activation grid from one provider layer."""

    data: np.ndarray
    layer_id: int
    source_resolution: tuple  # (H0, W0) of the depth input it was computed from

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] < 1:
            raise InputValidationError("feature map must be H x W x C with C >= 1")
        if not np.isfinite(self.data).all():
            raise InputValidationError("feature map contains non-finite values")
        self.source_resolution = tuple(int(x) for x in self.source_resolution)

    @property
    def shape(self):
        return self.data.shape


@dataclass
class PointFeatures:
    """One feature vector per point; ``indices`` names the points described.

    All-zero rows mark featureless points and are excluded from matching.
    """

    indices: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.intp).reshape(-1)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise InputValidationError("feature vectors must form a 2D (N, D) array")
        if self.vectors.shape[0] != self.indices.shape[0]:
            raise InputValidationError("indices and vectors row counts differ")
        if not np.isfinite(self.vectors).all():
            raise InputValidationError("feature vectors contain non-finite values")

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.indices.shape[0]


class FeaturePCA:
    """Mean-centered PCA with a deterministic sign convention.

    Components are ordered by descending explained variance; each component
    is flipped so its largest-magnitude loading is positive. When out_dim
    exceeds the achievable rank the missing channels are zero-padded and a
    warning is emitted.
    """

    def __init__(self, out_dim: int):
        if out_dim < 1:
            raise InputValidationError("out_dim must be >= 1")
        self.out_dim = out_dim

    def fit(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InputValidationError("PCA input must be a non-empty (N, C) array")
        self.mean_ = x.mean(axis=0)
        _, s, vt = np.linalg.svd(x - self.mean_, full_matrices=False)
        avail = min(self.out_dim, vt.shape[0])
        comps = vt[:avail].copy()
        for row in comps:
            j = int(np.argmax(np.abs(row)))
            if row[j] < 0:
                row *= -1.0
        if avail < self.out_dim:
            warnings.warn(
                f"PCA out_dim {self.out_dim} exceeds achievable rank {avail}; "
                "padding with zero channels",
                RuntimeWarning,
                stacklevel=2,
            )
            comps = np.vstack([comps, np.zeros((self.out_dim - avail, x.shape[1]))])
        self.components_ = comps
        var = s[:avail] ** 2 / max(x.shape[0] - 1, 1)
        self.explained_variance_ = np.concatenate(
            [var, np.zeros(self.out_dim - avail)]
        )
        return self

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean_) @ self.components_.T

    def fit_transform(self, x):
        return self.fit(x).transform(x)


def _pixels(fm: FeatureMap):
    h, w, c = fm.data.shape
    return fm.data.reshape(h * w, c)


def pca_reduce(fm: FeatureMap, out_dim: int) -> FeatureMap:
    """Reduce one map's channels by PCA fit on its own pixels (zero-shot)."""
    pca = FeaturePCA(out_dim).fit(_pixels(fm))
    h, w, _ = fm.data.shape
    reduced = pca.transform(_pixels(fm)).reshape(h, w, out_dim)
    return FeatureMap(reduced, fm.layer_id, fm.source_resolution)


def pca_reduce_pair(fm_a: FeatureMap, fm_b: FeatureMap, out_dim: int):
    """Reduce two maps of one depth-map pair through a single shared basis.

    Joint fitting keeps the two maps' features in one comparable space,
    which cross-map matching requires.
    """
    if fm_a.data.shape[2] != fm_b.data.shape[2]:
        raise InputValidationError("paired maps must share channel count")
    pca = FeaturePCA(out_dim).fit(np.vstack([_pixels(fm_a), _pixels(fm_b)]))
    out = []
    for fm in (fm_a, fm_b):
        h, w, _ = fm.data.shape
        out.append(
            FeatureMap(
                pca.transform(_pixels(fm)).reshape(h, w, out_dim),
                fm.layer_id,
                fm.source_resolution,
            )
        )
    return out[0], out[1]


def _corner_aligned_coords(n_out: int, n_in: int):
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out)
    return np.arange(n_out) * (n_in - 1) / (n_out - 1)


def _lerp_axis0(data, coords):
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, data.shape[0] - 1)
    frac = coords - lo
    return data[lo] * (1.0 - frac)[:, None, None] + data[hi] * frac[:, None, None]


def upsample_bilinear(fm: FeatureMap, h: int, w: int) -> FeatureMap:
    """Channelwise corner-aligned bilinear upsampling to (h, w)."""
    src_h, src_w, _ = fm.data.shape
    if h < src_h or w < src_w:
        raise InputValidationError("upsample target must be >= source size")
    if (h, w) == (src_h, src_w):
        return FeatureMap(fm.data.copy(), fm.layer_id, fm.source_resolution)
    rows = _lerp_axis0(fm.data, _corner_aligned_coords(h, src_h))
    cols = _lerp_axis0(rows.transpose(1, 0, 2), _corner_aligned_coords(w, src_w))
    return FeatureMap(cols.transpose(1, 0, 2), fm.layer_id, fm.source_resolution)


def _check_same_source(maps):
    res = {fm.source_resolution for fm in maps}
    if len(res) > 1:
        raise InputValidationError(f"layer maps come from different depth inputs: {res}")


def aggregate_layers(maps, out_dim: int) -> FeatureMap:
    """PCA-reduce each layer, upsample all to the largest size, concatenate.

    Channel order follows ascending layer_id.
    """
    if not maps:
        raise InputValidationError("aggregate_layers needs at least one map")
    _check_same_source(maps)
    maps = sorted(maps, key=lambda fm: fm.layer_id)
    reduced = [pca_reduce(fm, out_dim) for fm in maps]
    h = max(fm.data.shape[0] for fm in reduced)
    w = max(fm.data.shape[1] for fm in reduced)
    ups = [upsample_bilinear(fm, h, w) for fm in reduced]
    data = np.concatenate([fm.data for fm in ups], axis=2)
    return FeatureMap(data, maps[-1].layer_id, maps[0].source_resolution)


def aggregate_layer_pairs(maps_a, maps_b, out_dim):
    """Pairwise variant of aggregate_layers with joint per-layer PCA bases.

    ``maps_a`` and ``maps_b`` hold the same layers for the two depth maps of
    one view. Returns the two aggregated maps.
    """
    if len(maps_a) != len(maps_b) or not maps_a:
        raise InputValidationError("need matching non-empty layer lists")
    _check_same_source(maps_a)
    _check_same_source(maps_b)
    maps_a = sorted(maps_a, key=lambda fm: fm.layer_id)
    maps_b = sorted(maps_b, key=lambda fm: fm.layer_id)
    if [m.layer_id for m in maps_a] != [m.layer_id for m in maps_b]:
        raise InputValidationError("layer ids differ between the two map lists")
    red_a, red_b = [], []
    for fa, fb in zip(maps_a, maps_b):
        ra, rb = pca_reduce_pair(fa, fb, out_dim)
        red_a.append(ra)
        red_b.append(rb)
    out = []
    for reduced, src in ((red_a, maps_a), (red_b, maps_b)):
        h = max(fm.data.shape[0] for fm in reduced)
        w = max(fm.data.shape[1] for fm in reduced)
        ups = [upsample_bilinear(fm, h, w) for fm in reduced]
        out.append(
            FeatureMap(
                np.concatenate([fm.data for fm in ups], axis=2),
                src[-1].layer_id,
                src[0].source_resolution,
            )
        )
    return out[0], out[1]


def sample_at_pixels(fm: FeatureMap, pixels_vu, depth_hw) -> np.ndarray:
    """Bilinear-sample the map at depth-resolution pixel coordinates.

    Pixel (v, u) in a depth grid of shape depth_hw maps corner-aligned into
    the feature grid. Returns (N, C) vectors.
    """
    pixels_vu = np.asarray(pixels_vu, dtype=np.float64).reshape(-1, 2)
    fh, fw, c = fm.data.shape
    dh, dw = depth_hw
    ys = pixels_vu[:, 0] * ((fh - 1) / (dh - 1)) if dh > 1 else np.zeros(len(pixels_vu))
    xs = pixels_vu[:, 1] * ((fw - 1) / (dw - 1)) if dw > 1 else np.zeros(len(pixels_vu))
    ys = np.clip(ys, 0, fh - 1)
    xs = np.clip(xs, 0, fw - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, fh - 1)
    x1 = np.minimum(x0 + 1, fw - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[:, None]
    d = fm.data
    return (
        d[y0, x0] * (1 - wy) * (1 - wx)
        + d[y0, x1] * (1 - wy) * wx
        + d[y1, x0] * wy * (1 - wx)
        + d[y1, x1] * wy * wx
    )


def sample_point_features(fm: FeatureMap, ppm, depth_hw) -> PointFeatures:
    """Feature vector for every point visible in the pixel-point map."""
    vis = ppm.visible_points()
    pixels = ppm.point_to_pixel[vis]
    return PointFeatures(vis, sample_at_pixels(fm, pixels, depth_hw))


def l2_normalize_rows(x):
    """Row-wise unit vectors; zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    out = np.zeros_like(x)
    nz = norms[:, 0] > 0
    out[nz] = x[nz] / norms[nz]
    return out


def fuse_features(geo: PointFeatures, diff: PointFeatures) -> PointFeatures:
    """Concatenate the independently L2-normalized halves, per point.

    Both inputs must describe the same point index set. Points where either
    half is a zero vector come out all-zero (featureless, skipped when
    matching).
    """
    if geo.indices.shape != diff.indices.shape or not np.array_equal(
        np.sort(geo.indices), np.sort(diff.indices)
    ):
        raise InputValidationError("fuse_features requires identical point index sets")
    order_g = np.argsort(geo.indices, kind="stable")
    order_d = np.argsort(diff.indices, kind="stable")
    g = l2_normalize_rows(geo.vectors[order_g])
    d = l2_normalize_rows(diff.vectors[order_d])
    fused = np.concatenate([g, d], axis=1)
    featureless = (np.linalg.norm(g, axis=1) == 0) | (np.linalg.norm(d, axis=1) == 0)
    fused[featureless] = 0.0
    return PointFeatures(geo.indices[order_g], fused)
