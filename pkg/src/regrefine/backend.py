"""Feature acquisition: binary feature files and pluggable providers.

A provider turns a depth map into per-layer feature maps. Three are
built in: ``none`` (geometry only), ``synthetic`` (deterministic local
depth statistics, useful offline), and ``files`` (precomputed maps read
from disk). Feature files use a small fixed binary layout so maps can be
produced by a separate extraction process and consumed here bit-exactly.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    FeatureFormatError,
    InputValidationError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .features import FeatureMap

MAGIC = b"RFT1"
VERSION = 1
HEADER = struct.Struct("<4sHHIII")  # magic, version, layer_id, H, W, C
MAX_ELEMENTS = 2**28  # caps payload near 1 GiB

# Downsampling ratio of each extractor layer relative to the input image.
RATIO_BY_LAYER = {0: 64, 1: 64, 2: 64, 3: 32, 4: 32, 5: 32,
                  6: 16, 7: 16, 8: 16, 9: 8, 10: 8, 11: 8, 12: 8}

SYNTHETIC_CHANNELS = 8


def layer_ratio(layer_id: int) -> int:
    if layer_id not in RATIO_BY_LAYER:
        raise InputValidationError(
            f"layer_id must be in 0..12, got {layer_id}"
        )
    return RATIO_BY_LAYER[layer_id]


def feature_filename(pair_id: str, view: str, cloud: str, layer_id: int) -> str:
    """Canonical on-disk name for one feature map."""
    if view not in ("ref", "src"):
        raise InputValidationError(f"view must be 'ref' or 'src', got {view!r}")
    if cloud not in ("p", "q"):
        raise InputValidationError(f"cloud must be 'p' or 'q', got {cloud!r}")
    return f"{pair_id}.{view}.{cloud}.layer{layer_id}.rft"


def write_feature_file(path, fm: FeatureMap):
    data = np.ascontiguousarray(fm.data, dtype=np.float32)
    h, w, c = data.shape
    if h * w * c > MAX_ELEMENTS:
        raise DimensionOverflowError(
            f"feature map {h}x{w}x{c} exceeds the element cap"
        )
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, fm.layer_id, h, w, c))
        f.write(data.tobytes())


def read_feature_file(path, source_resolution=None) -> FeatureMap:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise TruncatedPayloadError(
            f"{path}: {len(blob)} bytes is too short for the {HEADER.size}-byte header"
        )
    magic, version, layer_id, h, w, c = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if h == 0 or w == 0 or c == 0:
        raise FeatureFormatError(f"{path}: zero dimension in header ({h}x{w}x{c})")
    if h * w * c > MAX_ELEMENTS:
        raise DimensionOverflowError(
            f"{path}: header claims {h}x{w}x{c}, over the element cap"
        )
    expected = h * w * c * 4
    got = len(blob) - HEADER.size
    if got < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {got} bytes, header needs {expected}"
        )
    if got > expected:
        raise FeatureFormatError(f"{path}: {got - expected} trailing bytes")
    data = np.frombuffer(blob, dtype="<f4", offset=HEADER.size).reshape(h, w, c)
    if source_resolution is None:
        ratio = RATIO_BY_LAYER.get(layer_id, 1)
        source_resolution = (h * ratio, w * ratio)
    return FeatureMap(data.astype(np.float64), layer_id, tuple(source_resolution))


@dataclass(frozen=True)
class FeatureRequest:
    pair_id: str
    view: str  # "ref" or "src"
    cloud: str  # "p" or "q"
    layer_ids: tuple
    depth: np.ndarray  # HxW meters, 0 marks invalid pixels

    def __post_init__(self):
        feature_filename(self.pair_id, self.view, self.cloud, 0)
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise InputValidationError("depth must be a 2-d array")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "layer_ids", tuple(int(i) for i in self.layer_ids))


class NullProvider:
    """No appearance features; downstream falls back to geometry only."""

    name = "none"

    def __call__(self, request: FeatureRequest):
        return []


class SyntheticProvider:
    """Local depth statistics shaped like real extractor output.

    Each layer tiles the depth map into ratio x ratio windows and emits
    8 channels per cell: mean, std, min, max of valid depths plus a
    4-bin gradient orientation histogram. Purely window-local, so the
    output is deterministic and exactly equivariant to shifts that are
    multiples of the window size.
    """

    name = "synthetic"

    def __call__(self, request: FeatureRequest):
        return [self.layer(request.depth, lid) for lid in request.layer_ids]

    def layer(self, depth, layer_id: int) -> FeatureMap:
        ratio = layer_ratio(layer_id)
        d = np.asarray(depth, dtype=np.float64)
        h, w = d.shape
        gh = -(-h // ratio)
        gw = -(-w // ratio)
        out = np.zeros((gh, gw, SYNTHETIC_CHANNELS))
        for gi in range(gh):
            for gj in range(gw):
                win = d[gi * ratio:(gi + 1) * ratio, gj * ratio:(gj + 1) * ratio]
                out[gi, gj] = _window_stats(win)
        return FeatureMap(out, layer_id, (h, w))


def _window_stats(win) -> np.ndarray:
    valid = np.isfinite(win) & (win > 0)
    feat = np.zeros(SYNTHETIC_CHANNELS)
    if not valid.any():
        return feat
    vals = win[valid]
    feat[0] = vals.mean()
    feat[1] = vals.std()
    feat[2] = vals.min()
    feat[3] = vals.max()
    if win.shape[0] >= 2 and win.shape[1] >= 2:
        filled = np.where(valid, win, 0.0)
        gy, gx = np.gradient(filled)
        mag = np.hypot(gx, gy)[valid]
        if mag.sum() > 0:
            ang = np.arctan2(gy, gx)[valid]
            bins = np.minimum(((ang + np.pi) / (np.pi / 2.0)).astype(int), 3)
            hist = np.bincount(bins, weights=mag, minlength=4)
            feat[4:8] = hist / mag.sum()
    return feat


class FileProvider:
    """Reads precomputed feature maps following the canonical file naming."""

    name = "files"

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FeatureFormatError(f"feature directory not found: {self.root}")

    def __call__(self, request: FeatureRequest):
        maps = []
        res = request.depth.shape
        for lid in request.layer_ids:
            path = self.root / feature_filename(
                request.pair_id, request.view, request.cloud, lid
            )
            if not path.is_file():
                raise FeatureFormatError(f"feature file not found: {path}")
            maps.append(read_feature_file(path, source_resolution=res))
        return maps


def get_provider(name: str, root=None):
    if name == "none":
        return NullProvider()
    if name == "synthetic":
        return SyntheticProvider()
    if name == "files":
        if root is None:
            raise InputValidationError("the files provider needs a root directory")
        return FileProvider(root)
    raise InputValidationError(f"unknown feature provider {name!r}")
