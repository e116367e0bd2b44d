"""Video super-resolution with jointly trained optical-flow super-resolution."""

from .degradation import DegradationModel, DegradationSpec
from .model import ModelConfig, VideoSR
from .ofrnet import OFRnet, OfrConfig
from .srnet import SRnet, SrConfig

__version__ = "0.1.0"

__all__ = [
    "DegradationModel",
    "DegradationSpec",
    "ModelConfig",
    "OFRnet",
    "OfrConfig",
    "SRnet",
    "SrConfig",
    "VideoSR",
]
