"""Box-prompted segmentation: service client, mock server and mask codecs."""

from .client import MaskResult, RetryPolicy, SegmenterClient, SegmenterUnavailable, segment_boxes
from .codecs import MaskRLE, bbox_from_mask, mask_to_polygon, rect_mask, rle_decode, rle_encode
from .mock import MockSegmentationServer
from .protocol import PROTOCOL_VERSION, ProtocolError

__all__ = [
    "MaskRLE",
    "MaskResult",
    "MockSegmentationServer",
    "PROTOCOL_VERSION",
    "ProtocolError",
    "RetryPolicy",
    "SegmenterClient",
    "SegmenterUnavailable",
    "bbox_from_mask",
    "mask_to_polygon",
    "rect_mask",
    "rle_decode",
    "rle_encode",
    "segment_boxes",
]
