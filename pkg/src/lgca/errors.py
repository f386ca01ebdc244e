"""Exception hierarchy shared across the package."""


class LgcaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParams(LgcaError):
    """A parameter violates its documented range or invariant."""


class DegenerateN(InvalidParams):
    """Crop count too small for a multi-step schedule (N < 2)."""


class EmptyInput(InvalidParams):
    """An operation received an empty sequence where at least one item is required."""


class DimMismatch(LgcaError):
    """Embedding dimensions disagree between operands or with the encoder contract."""


class EncoderUnavailable(LgcaError):
    """A remote encoder could not be reached or timed out."""


class BoundViolated(LgcaError):
    """An instrumented run exceeded the complexity bound it is required to satisfy."""


class ConfigError(LgcaError):
    """A run configuration file or value failed validation."""


class ManifestError(LgcaError):
    """A dataset manifest is malformed or references missing resources."""
