"""Mask codecs: column-major RLE, tight boxes and outer-contour polygons."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import cv2
import numpy as np

from ..imaging import BBox, PixelRect

__all__ = ["MaskRLE", "rle_encode", "rle_decode", "bbox_from_mask", "mask_to_polygon", "rect_mask"]


@dataclass(frozen=True)
class MaskRLE:
    """Run lengths in column-major order, alternating background/foreground.

    The first run is always background (possibly of length 0), which matches
    the uncompressed COCO convention.
    """

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("mask dimensions must be positive")
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("run lengths must be non-negative")
        if sum(counts) != self.width * self.height:
            raise ValueError(
                f"run lengths sum to {sum(counts)}, expected {self.width * self.height}"
            )
        object.__setattr__(self, "counts", counts)

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, data: dict) -> "MaskRLE":
        return cls(int(data["width"]), int(data["height"]), tuple(data["counts"]))

    @classmethod
    def empty(cls, width: int, height: int) -> "MaskRLE":
        return cls(width, height, (width * height,))


def rle_encode(mask: np.ndarray) -> MaskRLE:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.shape[0] < 1 or mask.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D mask, got shape {mask.shape}")
    flat = mask.astype(bool).ravel(order="F")
    # positions where the value flips, with a virtual leading background pixel
    changes = np.flatnonzero(np.diff(np.concatenate(([False], flat, [not flat[-1]]))))
    counts = np.diff(np.concatenate(([0], changes)))
    return MaskRLE(mask.shape[1], mask.shape[0], tuple(int(c) for c in counts))


def rle_decode(rle: MaskRLE) -> np.ndarray:
    """Boolean ``(height, width)`` array."""
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.counts)
    return flat.reshape((rle.height, rle.width), order="F")


def _as_array(mask: Union[MaskRLE, np.ndarray]) -> np.ndarray:
    if isinstance(mask, MaskRLE):
        return rle_decode(mask)
    return np.asarray(mask).astype(bool)


def bbox_from_mask(mask: Union[MaskRLE, np.ndarray]) -> BBox:
    arr = _as_array(mask)
    rows = np.flatnonzero(arr.any(axis=1))
    cols = np.flatnonzero(arr.any(axis=0))
    if rows.size == 0:
        raise ValueError("mask has no foreground pixels")
    return BBox(
        int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1), "segmenter"
    )


def rect_mask(width: int, height: int, rect: PixelRect) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    mask[max(rect.top, 0):rect.bottom, max(rect.left, 0):rect.right] = True
    return mask


def mask_to_polygon(mask: Union[MaskRLE, np.ndarray]) -> list[tuple[int, int]]:
    """Vertices ``(x, y)`` of the largest outer contour, at least three of them.

    Contours run through pixel indices.  Degenerate contours (a single pixel
    or a one-pixel-wide line) are replaced by the four corners of their
    pixel-edge bounding box.
    """
    arr = _as_array(mask)
    if not arr.any():
        raise ValueError("mask has no foreground pixels")
    contours, _ = cv2.findContours(
        arr.astype(np.uint8), cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE
    )
    best = max(contours, key=lambda c: (cv2.contourArea(c), len(c)))
    pts = [(int(p[0][0]), int(p[0][1])) for p in best]
    if len(pts) < 3 or cv2.contourArea(best) == 0:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x0, x1, y0, y1 = min(xs), max(xs) + 1, min(ys), max(ys) + 1
        pts = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return pts
