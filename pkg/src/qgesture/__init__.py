"""Desk-scale synthetic millimeter-wave hand-gesture recognition.

Signal synthesis from moving scattering centers, range/Doppler/angle
processing into point clouds, time-spectrum features with a capture
trigger, and a small numpy CNN classifier, all deterministic under a seed.
"""

from .config import (
    AppConfig,
    CfarParams,
    DatasetSpec,
    FeatureParams,
    RadarConfig,
    TrainConfig,
)
from .errors import (
    ArchitectureMismatchError,
    BadMagicError,
    ConfigError,
    DataFormatError,
    DegenerateInputError,
    GenerationError,
    InvalidInputError,
    TruncatedFileError,
)
from .sim import GESTURE_CLASSES, AliasingWarning, make_trajectory, render_gesture

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "CfarParams",
    "DatasetSpec",
    "FeatureParams",
    "RadarConfig",
    "TrainConfig",
    "ArchitectureMismatchError",
    "BadMagicError",
    "ConfigError",
    "DataFormatError",
    "DegenerateInputError",
    "GenerationError",
    "InvalidInputError",
    "TruncatedFileError",
    "GESTURE_CLASSES",
    "AliasingWarning",
    "make_trajectory",
    "render_gesture",
    "__version__",
]
