"""Ultrasonic chirp field sensing: simulation, features, training, recognition."""

__version__ = "0.1.0"

from .gestures import (  # noqa: F401
    Gesture,
    STATIC_GESTURES,
    DYNAMIC_GESTURES,
    INDIRECT_GESTURES,
    TOUCH_GESTURES,
    MAIN_CLASSES,
    INDIRECT_CLASSES,
)
from .signal import AudioStream, ChirpSpec, Spectrum  # noqa: F401
