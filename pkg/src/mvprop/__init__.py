"""mvprop: keyframe detection with motion-vector box propagation."""

from .geometry import Detection, PixelBox, YoloBox, to_pixel, to_yolo
from .propagate import MvpConfig, PropagationOutcome, propagate_box
from .scheduler import Pipeline, RunResult, run_video

__all__ = [
    "Detection",
    "PixelBox",
    "YoloBox",
    "to_pixel",
    "to_yolo",
    "MvpConfig",
    "PropagationOutcome",
    "propagate_box",
    "Pipeline",
    "RunResult",
    "run_video",
]

__version__ = "0.1.0"
