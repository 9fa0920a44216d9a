"""Exception hierarchy shared across the package.

Every error the CLI can surface maps to one of these classes so that exit
codes stay stable (see cli.EXIT_CODES).
"""


class RegRefineError(Exception):
    """Base class for all package errors."""


class InputValidationError(RegRefineError, ValueError):
    """Caller-supplied data violates a documented precondition."""


class EmptyRenderError(RegRefineError, RuntimeError):
    """Every point was culled during depth rendering.

    Usually signals a bad initial transform or unusable intrinsics.
    """


class EstimationError(RegRefineError, RuntimeError):
    """Rigid-transform estimation is infeasible (too few or degenerate pairs)."""


class ParseError(RegRefineError, ValueError):
    """A file could not be parsed; message carries line or byte offset."""


class ConfigError(RegRefineError, ValueError):
    """Pipeline configuration file is invalid (unknown key, bad value, version)."""


class FeatureFormatError(RegRefineError, ValueError):
    """Base class for feature-tensor file format violations."""


class BadMagicError(FeatureFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FeatureFormatError):
    """Feature file declares a version this reader does not understand."""


class TruncatedPayloadError(FeatureFormatError):
    """Payload shorter (or longer) than the header-declared H*W*C*4 bytes."""


class DimensionOverflowError(FeatureFormatError):
    """Header dimensions imply an implausibly large payload."""
