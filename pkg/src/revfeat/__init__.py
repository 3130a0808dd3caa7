"""Reverberation-based distance features for 3D sound event localization and detection."""
from .dsp import AudioClip, ComplexSpectrogram, StftConfig
from .features import FeatureStack, stack_features
from .metrics import EventRecord, score

__version__ = "0.1.0"

__all__ = ["AudioClip", "ComplexSpectrogram", "EventRecord", "FeatureStack", "StftConfig",
           "score", "stack_features"]
