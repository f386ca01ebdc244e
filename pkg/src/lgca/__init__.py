"""Zero-shot image-text classification with crop ensembles and salient-region expansion."""

from .errors import (
    BoundViolated,
    ConfigError,
    DegenerateN,
    DimMismatch,
    EmptyInput,
    EncoderUnavailable,
    InvalidParams,
    LgcaError,
    ManifestError,
)
from .geometry import (
    CropParams,
    ImageFrame,
    Region,
    expand_region,
    extract_patch,
    full_region,
    sample_crops,
)

__all__ = [
    "BoundViolated",
    "ConfigError",
    "CropParams",
    "DegenerateN",
    "DimMismatch",
    "EmptyInput",
    "EncoderUnavailable",
    "ImageFrame",
    "InvalidParams",
    "LgcaError",
    "ManifestError",
    "Region",
    "expand_region",
    "extract_patch",
    "full_region",
    "sample_crops",
]

__version__ = "0.1.0"
