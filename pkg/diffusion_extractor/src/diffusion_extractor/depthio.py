"""Depth input: 16-bit millimeter PNGs and their framing metadata."""

import json

import numpy as np
from PIL import Image

from .errors import DepthFormatError


def read_depth_png(path) -> np.ndarray:
    """Load a millimeter depth PNG as a meters grid; 0 stays invalid."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise DepthFormatError(f"{path}: depth PNG must be single channel")
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise DepthFormatError(f"{path}: unsupported depth PNG dtype {arr.dtype}")
    return arr.astype(np.float64) / 1000.0


def resize_nearest(depth, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resize of a depth grid.

    Depth is not an intensity image: averaging across an occlusion edge
    invents points in free space, so each output pixel copies exactly one
    input value and invalid zeros survive untouched.
    """
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2 or d.size == 0:
        raise DepthFormatError("depth grid must be 2D and non-empty")
    if height < 1 or width < 1:
        raise DepthFormatError("target resolution must be positive")
    h, w = d.shape
    if (h, w) == (height, width):
        return d.copy()
    rows = np.minimum((np.arange(height) + 0.5) * h // height, h - 1).astype(np.intp)
    cols = np.minimum((np.arange(width) + 0.5) * w // width, w - 1).astype(np.intp)
    return d[rows[:, None], cols[None, :]]


def load_frames(path) -> dict:
    """Read the framing metadata JSON written next to the depth renders."""
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise DepthFormatError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise DepthFormatError(f"{path}: frames metadata must be an object")
    for key in ("pair_id", "depth_unit", "views"):
        if key not in data:
            raise DepthFormatError(f"{path}: frames metadata missing '{key}'")
    if data["depth_unit"] != "millimeter":
        raise DepthFormatError(
            f"{path}: unsupported depth unit {data['depth_unit']!r}"
        )
    return data
