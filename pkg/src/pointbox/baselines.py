"""Reference extractors: fixed-size boxes and threshold + connected components."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imaging import BBox, GrayFrame, clip_rect
from .pic import TrajectoryPoint, _centered_rect, check_point

__all__ = ["FixedConfig", "ThresholdConfig", "fixed_box", "threshold_box", "binarize"]

logger = logging.getLogger(__name__)

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True)
class FixedConfig:
    width: int = 50
    height: int = 50

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("fixed box size must be at least 1x1")


@dataclass(frozen=True)
class ThresholdConfig:
    """``foreground_below`` marks pixels ``<= threshold``; ``foreground_above`` marks ``> threshold``."""

    threshold: int = 150
    polarity: str = "foreground_below"
    connectivity: int = 8
    search_radius: int = 50
    fallback_size: int = 50

    def __post_init__(self):
        if not 0 <= self.threshold <= 255:
            raise ValueError("threshold must lie in [0, 255]")
        if self.polarity not in ("foreground_below", "foreground_above"):
            raise ValueError(f"unknown polarity {self.polarity!r}")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.search_radius < 1 or self.fallback_size < 1:
            raise ValueError("search_radius and fallback_size must be >= 1")


def fixed_box(point: TrajectoryPoint, frame: GrayFrame, config: FixedConfig = FixedConfig()) -> BBox:
    check_point(frame, point)
    rect = _centered_rect(point.x, point.y, config.width, config.height)
    return BBox.from_rect(clip_rect(rect, frame), "fixed")


def binarize(frame: GrayFrame, config: ThresholdConfig = ThresholdConfig()) -> np.ndarray:
    if config.polarity == "foreground_below":
        return frame.intensities <= config.threshold
    return frame.intensities > config.threshold


def threshold_box(
    frame: GrayFrame,
    point: TrajectoryPoint,
    config: ThresholdConfig = ThresholdConfig(),
) -> BBox:
    """Tight box of the foreground component selected by the point.

    The component under the point wins.  Otherwise the component owning the
    foreground pixel nearest to the point (within ``search_radius``) is used.
    If nothing qualifies, a ``fallback_size`` fixed box is returned with
    ``source="fixed"`` so callers can tell the fallback fired.
    """
    check_point(frame, point)
    px, py = int(math.floor(point.x)), int(math.floor(point.y))
    foreground = binarize(frame, config)

    r = config.search_radius
    x0, x1 = max(px - r, 0), min(px + r + 1, frame.width)
    y0, y1 = max(py - r, 0), min(py + r + 1, frame.height)
    window = foreground[y0:y1, x0:x1]
    if not window.any():
        return _fallback(point, frame, config)

    if foreground[py, px]:
        seed = (py, px)
    else:
        ys, xs = np.nonzero(window)
        d2 = (xs + x0 - px) ** 2 + (ys + y0 - py) ** 2
        # row-major nonzero order + stable argmin makes ties deterministic
        best = int(np.argmin(d2))
        if d2[best] > r * r:
            return _fallback(point, frame, config)
        seed = (int(ys[best]) + y0, int(xs[best]) + x0)

    labels, _ = ndimage.label(foreground, structure=_STRUCTURES[config.connectivity])
    component = labels == labels[seed]
    rows = np.flatnonzero(component.any(axis=1))
    cols = np.flatnonzero(component.any(axis=0))
    top, bottom = int(rows[0]), int(rows[-1])
    left, right = int(cols[0]), int(cols[-1])
    return BBox(left, top, right - left + 1, bottom - top + 1, "threshold")


def _fallback(point, frame, config):
    logger.debug("no foreground component near %s; using fixed fallback", point)
    size = config.fallback_size
    return fixed_box(point, frame, FixedConfig(size, size))
