"""Binary feature-map format shared with the registration pipeline.

Layout: a 20-byte little-endian header (magic ``RFT1``, format version,
layer id, H, W, C) followed by the float32 map in C order. The consumer
reads these files without conversion, so the layout here must never
drift from its side of the contract.
"""

import struct

import numpy as np

from .errors import ConfigError, FeatureFormatError

MAGIC = b"RFT1"
VERSION = 1
HEADER = struct.Struct("<4sHHIII")
MAX_ELEMENTS = 2**28

# Downsampling ratio of each decoder layer relative to the input image.
RATIO_BY_LAYER = {0: 64, 1: 64, 2: 64, 3: 32, 4: 32, 5: 32,
                  6: 16, 7: 16, 8: 16, 9: 8, 10: 8, 11: 8, 12: 8}


def layer_ratio(layer_id: int) -> int:
    if layer_id not in RATIO_BY_LAYER:
        raise ConfigError(f"layer id must be in 0..12, got {layer_id}")
    return RATIO_BY_LAYER[layer_id]


def feature_filename(pair_id: str, view: str, cloud: str, layer_id: int) -> str:
    """Canonical on-disk name for one feature map."""
    if view not in ("ref", "src"):
        raise ConfigError(f"view must be 'ref' or 'src', got {view!r}")
    if cloud not in ("p", "q"):
        raise ConfigError(f"cloud must be 'p' or 'q', got {cloud!r}")
    return f"{pair_id}.{view}.{cloud}.layer{layer_id}.rft"


def write_feature_map(path, data, layer_id: int):
    data = np.ascontiguousarray(data, dtype=np.float32)
    if data.ndim != 3:
        raise FeatureFormatError("feature map must be H x W x C")
    h, w, c = data.shape
    if min(h, w, c) < 1:
        raise FeatureFormatError("feature map has a zero dimension")
    if h * w * c > MAX_ELEMENTS:
        raise FeatureFormatError(f"feature map {h}x{w}x{c} exceeds the element cap")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, int(layer_id), h, w, c))
        f.write(data.tobytes())


def read_feature_map(path):
    """Returns (float32 H x W x C array, layer id)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < HEADER.size:
        raise FeatureFormatError(f"{path}: truncated header")
    magic, version, layer_id, h, w, c = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FeatureFormatError(f"{path}: not a feature file (bad magic)")
    if version != VERSION:
        raise FeatureFormatError(f"{path}: unsupported format version {version}")
    if min(h, w, c) == 0:
        raise FeatureFormatError(f"{path}: zero dimension in header")
    if h * w * c > MAX_ELEMENTS:
        raise FeatureFormatError(f"{path}: header dimensions exceed the element cap")
    expected = HEADER.size + 4 * h * w * c
    if len(blob) < expected:
        raise FeatureFormatError(f"{path}: truncated payload")
    if len(blob) > expected:
        raise FeatureFormatError(f"{path}: trailing bytes after payload")
    data = np.frombuffer(blob, np.float32, offset=HEADER.size).reshape(h, w, c)
    return data.copy(), int(layer_id)
