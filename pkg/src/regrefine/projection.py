"""Depth-map rendering and the pixel/point bookkeeping built on top of it.

Point clouds are rendered through a pinhole camera with a z-buffer; sparse
renders are densified by morphological closing before feature extraction.
The PixelPointMap keeps the association needed to transfer per-pixel
features back onto 3D points.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .core import PointCloud, RigidTransform, apply_transform, invert
from .errors import EmptyRenderError, InputValidationError
from .validation import check_points

Z_MIN = 0.01  # meters; points nearer than this are culled
Z_MAX = 65.535  # meters; ceiling of the 16-bit millimeter encoding


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InputValidationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputValidationError("principal point must lie inside the image")

    @staticmethod
    def default():
        """Standard indoor RGB-D convention: 640x480, f=585."""
        return CameraIntrinsics(585.0, 585.0, 319.5, 239.5, 640, 480)


@dataclass
class DepthMap:
    """H x W grid of depths in meters; 0 marks an invalid pixel."""

    depth: np.ndarray
    intrinsics: CameraIntrinsics
    view_pose: RigidTransform  # world -> camera

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2:
            raise InputValidationError("depth grid must be 2D")
        if not np.isfinite(self.depth).all():
            raise InputValidationError("depth grid contains non-finite values")
        if (self.depth < 0).any():
            raise InputValidationError("depth values must be >= 0")

    @property
    def valid_mask(self):
        return self.depth > 0

    @property
    def shape(self):
        return self.depth.shape


@dataclass
class PixelPointMap:
    """Winning point per pixel and winning pixel per point.

    ``pixel_to_point[v, u]`` is the index of the nearest (z-buffer winning)
    point at that pixel, or -1. ``point_to_pixel[i]`` is that point's (v, u),
    or (-1, -1) for occluded / out-of-frustum points.
    """

    pixel_to_point: np.ndarray
    point_to_pixel: np.ndarray

    def visible_points(self):
        """Indices of points that won a pixel, ascending."""
        return np.flatnonzero(self.point_to_pixel[:, 0] >= 0)


def _as_points(cloud):
    if isinstance(cloud, PointCloud):
        return cloud.points
    return check_points(cloud)


def render_depth(cloud, pose: RigidTransform, k: CameraIntrinsics, z_min: float = Z_MIN):
    """Render a cloud to a depth map; returns (DepthMap, PixelPointMap).

    The cloud is given in the camera's world frame; ``pose`` maps world to
    camera. Raises EmptyRenderError when every point is culled.
    """
    pts = _as_points(cloud)
    cam = apply_transform(pose, pts)
    z = cam[:, 2]
    in_front = z > z_min
    u = np.full(pts.shape[0], -1, dtype=np.intp)
    v = np.full(pts.shape[0], -1, dtype=np.intp)
    uf = k.fx * cam[in_front, 0] / z[in_front] + k.cx
    vf = k.fy * cam[in_front, 1] / z[in_front] + k.cy
    ui = np.floor(uf + 0.5).astype(np.intp)
    vi = np.floor(vf + 0.5).astype(np.intp)
    inside = (ui >= 0) & (ui < k.width) & (vi >= 0) & (vi < k.height)
    idx_front = np.flatnonzero(in_front)
    keep = idx_front[inside]
    u[keep] = ui[inside]
    v[keep] = vi[inside]
    if keep.size == 0:
        raise EmptyRenderError(
            "no point projects into the image; check the initial transform "
            "and camera intrinsics"
        )

    depth = np.zeros((k.height, k.width))
    pixel_to_point = np.full((k.height, k.width), -1, dtype=np.intp)
    # Z-buffer: sort candidates by (pixel, depth, index) and keep the first
    # per pixel, so equal depths resolve to the lowest point index.
    flat = v[keep] * k.width + u[keep]
    order = np.lexsort((keep, z[keep], flat))
    flat_sorted = flat[order]
    first = np.ones(flat_sorted.shape[0], dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    winners = keep[order][first]
    depth.flat[flat_sorted[first]] = z[winners]
    pixel_to_point.flat[flat_sorted[first]] = winners

    point_to_pixel = np.full((pts.shape[0], 2), -1, dtype=np.intp)
    point_to_pixel[winners, 0] = v[winners]
    point_to_pixel[winners, 1] = u[winners]
    return (
        DepthMap(depth, k, pose),
        PixelPointMap(pixel_to_point, point_to_pixel),
    )


def densify_depth(d: DepthMap, kernel: int = 3, passes: int = 2) -> DepthMap:
    """Fill holes by morphological closing of the validity mask.

    Filled pixels take the minimum (nearest-to-camera) valid depth in the
    kernel window; originally valid pixels are never altered.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise InputValidationError("densify kernel must be odd and >= 1")
    depth = d.depth.copy()
    structure = np.ones((kernel, kernel), dtype=bool)
    for _ in range(passes):
        valid = depth > 0
        dilated = ndimage.binary_dilation(valid, structure=structure)
        closed = ndimage.binary_erosion(dilated, structure=structure, border_value=1)
        fill = closed & ~valid
        if not fill.any():
            break
        padded = np.where(valid, depth, np.inf)
        local_min = ndimage.minimum_filter(padded, size=kernel, mode="constant", cval=np.inf)
        fillable = fill & np.isfinite(local_min)
        depth[fillable] = local_min[fillable]
    return DepthMap(depth, d.intrinsics, d.view_pose)


def backproject(d: DepthMap) -> np.ndarray:
    """Lift every valid pixel to a camera-frame 3D point, row-major order."""
    pts, _ = backproject_with_pixels(d)
    return pts


def backproject_with_pixels(d: DepthMap):
    """Backproject valid pixels; returns (points (N,3) camera frame, pixels (N,2) as (v,u))."""
    k = d.intrinsics
    vs, us = np.nonzero(d.valid_mask)
    z = d.depth[vs, us]
    x = (us - k.cx) * z / k.fx
    y = (vs - k.cy) * z / k.fy
    return np.column_stack([x, y, z]), np.column_stack([vs, us]).astype(np.intp)


def auto_frame_pose(pts, k: CameraIntrinsics, margin: float = 1.05) -> RigidTransform:
    """Deterministic virtual camera for a cloud.

    The camera looks down +z of the cloud's own frame at the centroid, backed
    off so the 95th-percentile point radius fits the narrower frustum axis.
    """
    pts = check_points(pts, "cloud")
    centroid = pts.mean(axis=0)
    r95 = float(np.percentile(np.linalg.norm(pts - centroid, axis=1), 95))
    half_tan = min(k.width / (2 * k.fx), k.height / (2 * k.fy))
    if r95 <= 0:
        dist = 1.0
    else:
        dist = margin * r95 * (1.0 + 1.0 / half_tan)
    dist = max(dist, Z_MIN + r95 + 1e-3)
    origin = centroid - np.array([0.0, 0.0, dist])
    return RigidTransform(np.eye(3), -origin)


@dataclass
class ViewRender:
    """One viewpoint's pair of renders: the view-owning cloud and the other."""

    view: str  # "ref" or "src"
    pose: RigidTransform  # world(view frame) -> camera
    depth_p: DepthMap
    ppm_p: PixelPointMap
    depth_q: DepthMap
    ppm_q: PixelPointMap
    # maps each cloud's own frame into this view's world frame
    p_to_view: RigidTransform
    q_to_view: RigidTransform


def make_view_pairs(p: PointCloud, q: PointCloud, t_init: RigidTransform, k: CameraIntrinsics,
                    margin: float = 1.05):
    """Render both clouds from the reference and the source viewpoints.

    Reference view: P as-is and Q moved by t_init, camera framed on P.
    Source view: P moved by t_init^-1 and Q as-is, camera framed on Q.
    Returns (ref ViewRender, src ViewRender).
    """
    t_inv = invert(t_init)
    views = []
    for view, owner_pts, p_to_view, q_to_view in (
        ("ref", p.points, RigidTransform.identity(), t_init),
        ("src", q.points, t_inv, RigidTransform.identity()),
    ):
        pose = auto_frame_pose(owner_pts, k, margin=margin)
        depth_p, ppm_p = render_depth(apply_transform(p_to_view, p.points), pose, k)
        depth_q, ppm_q = render_depth(apply_transform(q_to_view, q.points), pose, k)
        views.append(
            ViewRender(view, pose, depth_p, ppm_p, depth_q, ppm_q, p_to_view, q_to_view)
        )
    return views[0], views[1]


def write_depth_png(d, path):
    """Write depth as 16-bit grayscale PNG, millimeter units, 0 invalid."""
    depth = d.depth if isinstance(d, DepthMap) else np.asarray(d, dtype=np.float64)
    mm = np.round(depth * 1000.0)
    mm[(mm < 0) | (mm > 65535)] = 0
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")


def read_depth_png(path) -> np.ndarray:
    """Read a 16-bit millimeter PNG back to a meters grid (0 stays invalid)."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise InputValidationError(f"unsupported depth PNG dtype {arr.dtype}")
    return arr.astype(np.float64) / 1000.0
