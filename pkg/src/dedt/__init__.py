"""Diverse-ensemble discriminative tracker."""
from .config import TrackerConfig
from .geometry import BoundingBox
from .tracker import Tracker, run_tracker

__all__ = ["BoundingBox", "Tracker", "TrackerConfig", "run_tracker"]
__version__ = "0.1.0"
