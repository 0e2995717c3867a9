"""Joint detection and embedding multi-object tracking.

Kalman motion model, appearance-aware Hungarian association, batch-hard
triplet mining, CLEAR-MOT evaluation, MOT/KITTI file formats and a
synthetic scene generator.
"""
from .geometry import BBox, iou
from .io import Detection, FormatError
from .tracker import FrameResult, Tracker, TrackerParams, run_sequence

__version__ = "0.1.0"

__all__ = ["BBox", "iou", "Detection", "FormatError", "FrameResult", "Tracker",
           "TrackerParams", "run_sequence", "__version__"]
