"""Depth-conditioned feature extraction to per-layer feature files."""

from .config import ExtractorConfig
from .errors import (
    ConfigError,
    DepthFormatError,
    ExtractorError,
    FeatureFormatError,
    MissingModelError,
)
from .extract import extract_frames, extract_layers

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DepthFormatError",
    "ExtractorConfig",
    "ExtractorError",
    "FeatureFormatError",
    "MissingModelError",
    "extract_frames",
    "extract_layers",
    "__version__",
]
