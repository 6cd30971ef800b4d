"""Visual-tactile 3D-convolution grasp state assessment, with a synthetic grasp simulator."""
from .model import GraspWindow, ModelConfig, VTFN, build
from .states import CLASS_NAMES, GraspState

__version__ = "0.1.0"

__all__ = ["VTFN", "GraspState", "GraspWindow", "ModelConfig", "build", "CLASS_NAMES"]
