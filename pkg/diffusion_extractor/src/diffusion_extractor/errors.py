class ExtractorError(Exception):
    """Base class for everything this package raises on purpose."""


class ConfigError(ExtractorError):
    pass


class DepthFormatError(ExtractorError):
    """Depth PNG or framing metadata is malformed."""


class FeatureFormatError(ExtractorError):
    """Feature file cannot be written or read back."""


class MissingModelError(ExtractorError):
    """The pretrained model or its runtime dependencies are unavailable."""
