"""Slip-aware dual-arm handover planning for human-robot collaborative assembly."""

from .errors import PlanningError, SceneError
from .se3 import Pose

__all__ = ["Pose", "PlanningError", "SceneError"]
__version__ = "0.1.0"
