"""Frame loading, grayscale conversion and rectangle statistics.

Coordinates follow image-file ordering: ``x`` is the column (grows to the
right), ``y`` is the row (grows downward), origin at the top-left corner.
Pixel ``(i, j)`` covers the half-open square ``[i, i+1) x [j, j+1)``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Union

import numpy as np
from PIL import Image

__all__ = [
    "GrayFrame",
    "PixelRect",
    "BBox",
    "PointOutsideFrame",
    "round_half_up",
    "to_gray",
    "load_frame",
    "save_frame",
    "clip_rect",
    "region_sum",
    "region_mean",
]

BOX_SOURCES = ("pic", "fixed", "threshold", "human", "segmenter")


class PointOutsideFrame(ValueError):
    """Raised when a point or rectangle does not intersect the frame."""


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class GrayFrame:
    """Single-channel intensity raster, stored as a read-only ``(H, W)`` uint8 array."""

    intensities: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.intensities)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise ValueError("intensities must be integral")
            arr = arr.astype(np.uint8)
        elif arr.base is not None or arr.flags.writeable:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "intensities", arr)

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def bounds(self) -> "PixelRect":
        return PixelRect(0, 0, self.width, self.height)

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def __eq__(self, other):
        if not isinstance(other, GrayFrame):
            return NotImplemented
        return np.array_equal(self.intensities, other.intensities)

    def __hash__(self):
        return hash((self.intensities.shape, self.intensities.tobytes()))


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned integer rectangle; may extend past the frame until clipped."""

    left: int
    top: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"rect must have positive size, got {self.width}x{self.height}")

    @property
    def right(self) -> int:
        """Exclusive right edge."""
        return self.left + self.width

    @property
    def bottom(self) -> int:
        """Exclusive bottom edge."""
        return self.top + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + self.width / 2, self.top + self.height / 2)

    def contains_rect(self, other: "PixelRect") -> bool:
        return (
            self.left <= other.left
            and self.top <= other.top
            and other.right <= self.right
            and other.bottom <= self.bottom
        )

    def translate(self, dx: int, dy: int) -> "PixelRect":
        return PixelRect(self.left + dx, self.top + dy, self.width, self.height)


@dataclass(frozen=True)
class BBox(PixelRect):
    """Annotation box produced by one of the extractors (or a human)."""

    source: str = "pic"

    def __post_init__(self):
        super().__post_init__()
        if self.source not in BOX_SOURCES:
            raise ValueError(f"unknown box source {self.source!r}")

    @classmethod
    def from_rect(cls, rect: PixelRect, source: str) -> "BBox":
        return cls(rect.left, rect.top, rect.width, rect.height, source)

    def as_rect(self) -> PixelRect:
        return PixelRect(self.left, self.top, self.width, self.height)

    def as_xyxy(self) -> tuple[int, int, int, int]:
        return (self.left, self.top, self.right, self.bottom)


def to_gray(rgb: np.ndarray) -> GrayFrame:
    """Rec.601 luma of an ``(H, W, 3)`` raster, rounded half-up.

    The weights are applied in integer thousandths so the rounding is exact:
    ``(299 R + 587 G + 114 B + 500) // 1000``.
    """
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) raster, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError("channel values must lie in [0, 255]")
    wide = arr.astype(np.int64)
    luma = (299 * wide[..., 0] + 587 * wide[..., 1] + 114 * wide[..., 2] + 500) // 1000
    return GrayFrame(luma.astype(np.uint8))


def load_frame(path: Union[str, os.PathLike]) -> GrayFrame:
    """Read a PNG/JPEG file into a :class:`GrayFrame`."""
    with Image.open(path) as img:
        if img.mode in ("L", "I;16", "I", "F"):
            arr = np.asarray(img.convert("L"))
            return GrayFrame(arr)
        arr = np.asarray(img.convert("RGB"))
    return to_gray(arr)


def save_frame(frame: GrayFrame, path: Union[str, os.PathLike]) -> None:
    Image.fromarray(np.asarray(frame.intensities)).save(path, format="PNG")


def clip_rect(rect: PixelRect, frame: Union[GrayFrame, PixelRect]) -> PixelRect:
    """Intersect ``rect`` with the frame; raises :class:`PointOutsideFrame` when empty."""
    bounds = frame.bounds if isinstance(frame, GrayFrame) else frame
    left = max(rect.left, bounds.left)
    top = max(rect.top, bounds.top)
    right = min(rect.right, bounds.right)
    bottom = min(rect.bottom, bounds.bottom)
    if right <= left or bottom <= top:
        raise PointOutsideFrame(f"{rect} does not intersect the frame")
    if (left, top, right, bottom) == (rect.left, rect.top, rect.right, rect.bottom):
        return rect
    return PixelRect(left, top, right - left, bottom - top)


def region_sum(frame: GrayFrame, rect: PixelRect) -> int:
    """Exact integer intensity sum over a clipped rectangle."""
    if not frame.bounds.contains_rect(rect):
        raise ValueError(f"{rect} is not clipped to the frame")
    window = frame.intensities[rect.top:rect.bottom, rect.left:rect.right]
    return int(window.sum(dtype=np.int64))


def region_mean(frame: GrayFrame, rect: PixelRect) -> float:
    return region_sum(frame, rect) / rect.area
