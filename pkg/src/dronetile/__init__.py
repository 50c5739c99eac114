"""Small-drone detection around a pluggable detector.

Two-scale tiled inference, cross-window fusion with NMS, temporal gap
filling, copy-paste augmentation and AP50 evaluation, plus synthetic
scenes and a mock detector for testing without a trained model.
"""

__version__ = "0.1.0"

from .evaluation import EvalReport, GroundTruth, average_precision, evaluate, match_detections
from .fusion import FusionConfig, PlanMismatchError, fuse_frame
from .geometry import BoundingBox, Detection, clip, iou, nms, remap
from .temporal import TemporalConfig, VideoDetections, interpolate_gaps
from .tiling import TilePlan, TileWindow, plan_tiles

__all__ = [
    "BoundingBox",
    "Detection",
    "EvalReport",
    "FusionConfig",
    "GroundTruth",
    "PlanMismatchError",
    "TemporalConfig",
    "TilePlan",
    "TileWindow",
    "VideoDetections",
    "average_precision",
    "clip",
    "evaluate",
    "fuse_frame",
    "interpolate_gaps",
    "iou",
    "match_detections",
    "nms",
    "plan_tiles",
    "remap",
]
