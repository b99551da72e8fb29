"""Turn per-frame trajectory points into box and mask annotations.

The core extractor grows a patch around each point until its mean
intensity stops changing.  Fixed-size and thresholding baselines, IoU
evaluation, dataset assembly and a client for an external box-prompted
segmentation service are provided alongside it.
"""

__version__ = "0.1.0"

from .imaging import BBox, GrayFrame, PixelRect, PointOutsideFrame, clip_rect, load_frame, region_mean, to_gray
from .pic import Halt, IntensityTrace, PicConfig, TrajectoryPoint, expand, init_box, pic_batch, pic_box
from .baselines import FixedConfig, ThresholdConfig, fixed_box, threshold_box
from .metrics import EvalItem, MethodSummary, evaluate, iou, time_extractor

__all__ = [
    "BBox",
    "EvalItem",
    "FixedConfig",
    "GrayFrame",
    "Halt",
    "IntensityTrace",
    "MethodSummary",
    "PicConfig",
    "PixelRect",
    "PointOutsideFrame",
    "ThresholdConfig",
    "TrajectoryPoint",
    "clip_rect",
    "evaluate",
    "expand",
    "fixed_box",
    "init_box",
    "iou",
    "load_frame",
    "pic_batch",
    "pic_box",
    "region_mean",
    "threshold_box",
    "time_extractor",
    "to_gray",
]
