"""Patch intensity convergence: grow a box around a point until its mean settles.

Starting from a ``w0 x h0`` patch centred on the point, the box grows by
``delta`` pixels in width and height per step.  After each step the mean
intensity of the (frame-clipped) box is compared with the previous one and
the expansion stops once the change is smaller than ``epsilon``.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, NamedTuple, Optional

from .imaging import (
    BBox,
    GrayFrame,
    PixelRect,
    PointOutsideFrame,
    clip_rect,
    region_sum,
    round_half_up,
)

__all__ = [
    "PicConfig",
    "TrajectoryPoint",
    "Halt",
    "IntensityTrace",
    "BatchResult",
    "init_box",
    "expand",
    "pic_box",
    "pic_batch",
    "check_point",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PicConfig:
    w0: int = 8
    h0: int = 8
    delta: int = 5
    epsilon: float = 4.0
    max_iters: int = 64
    return_expanded: bool = False

    def __post_init__(self):
        if self.w0 < 1 or self.h0 < 1:
            raise ValueError("initial patch size must be at least 1x1")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class TrajectoryPoint:
    x: float
    y: float
    frame_index: int = 0
    sequence_id: str = ""

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")


class Halt(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters_reached"
    SATURATED = "frame_saturated"


@dataclass(frozen=True)
class IntensityTrace:
    """Means and clipped boxes visited by one run, in order."""

    means: tuple[float, ...]
    boxes: tuple[PixelRect, ...]
    halt: Halt

    def __post_init__(self):
        if len(self.means) != len(self.boxes) or not self.means:
            raise ValueError("means and boxes must be non-empty and of equal length")

    @property
    def deltas(self) -> list[float]:
        return [abs(b - a) for a, b in zip(self.means, self.means[1:])]

    def to_dict(self) -> dict:
        return {
            "halt": self.halt.value,
            "means": list(self.means),
            "boxes": [[b.left, b.top, b.width, b.height] for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IntensityTrace":
        return cls(
            means=tuple(float(m) for m in data["means"]),
            boxes=tuple(PixelRect(*map(int, b)) for b in data["boxes"]),
            halt=Halt(data["halt"]),
        )


def _centered_rect(cx: float, cy: float, width: int, height: int) -> PixelRect:
    return PixelRect(round_half_up(cx - width / 2), round_half_up(cy - height / 2), width, height)


def init_box(point: TrajectoryPoint, config: PicConfig = PicConfig()) -> PixelRect:
    """Initial ``w0 x h0`` patch centred on the point (not clipped)."""
    return _centered_rect(point.x, point.y, config.w0, config.h0)


def expand(
    rect: PixelRect,
    config: PicConfig = PicConfig(),
    center: Optional[tuple[float, float]] = None,
) -> PixelRect:
    """Grow ``rect`` by ``delta`` in both dimensions around a fixed centre.

    ``center`` defaults to the rectangle's own centre.  :func:`pic_box` passes
    the original (possibly fractional) point so rounding never accumulates.
    """
    cx, cy = rect.center if center is None else center
    return _centered_rect(cx, cy, rect.width + config.delta, rect.height + config.delta)


def check_point(frame: GrayFrame, point: TrajectoryPoint) -> None:
    if not frame.contains(point.x, point.y):
        raise PointOutsideFrame(
            f"point ({point.x}, {point.y}) outside {frame.width}x{frame.height} frame"
        )


def _below_epsilon(s0: int, n0: int, s1: int, n1: int, eps: Fraction) -> bool:
    # |s1/n1 - s0/n0| < eps, compared in exact integer arithmetic
    return abs(s1 * n0 - s0 * n1) * eps.denominator < eps.numerator * n0 * n1


def pic_box(
    frame: GrayFrame,
    point: TrajectoryPoint,
    config: PicConfig = PicConfig(),
) -> tuple[BBox, IntensityTrace]:
    """Run patch intensity convergence for one point.

    Returns the annotation box and the full trace.  On convergence the box is
    the one *before* the last expansion unless ``config.return_expanded`` is
    set.  Boxes are clipped to the frame before their mean is taken; an
    expansion that leaves the clipped box unchanged is not recorded, and a
    box covering the whole frame ends the run as ``frame_saturated``.
    """
    check_point(frame, point)
    eps = Fraction(config.epsilon)
    full = frame.bounds
    center = (point.x, point.y)

    raster = init_box(point, config)
    clipped = clip_rect(raster, frame)
    s_prev = region_sum(frame, clipped)
    means = [s_prev / clipped.area]
    boxes = [clipped]
    halt = Halt.MAX_ITERS
    result = clipped

    for _ in range(config.max_iters):
        if clipped == full:
            halt = Halt.SATURATED
            result = full
            break
        raster = expand(raster, config, center)
        grown = clip_rect(raster, frame)
        if grown == clipped:
            continue
        s_next = region_sum(frame, grown)
        means.append(s_next / grown.area)
        boxes.append(grown)
        if _below_epsilon(s_prev, clipped.area, s_next, grown.area, eps):
            halt = Halt.CONVERGED
            result = grown if config.return_expanded else clipped
            break
        s_prev, clipped = s_next, grown
        result = clipped
    else:
        if clipped == full:
            halt, result = Halt.SATURATED, full

    trace = IntensityTrace(tuple(means), tuple(boxes), halt)
    return BBox.from_rect(result, "pic"), trace


class BatchResult(NamedTuple):
    box: Optional[BBox]
    trace: Optional[IntensityTrace]
    error: Optional[Exception]

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_one(item, config):
    frame, point = item
    try:
        box, trace = pic_box(frame, point, config)
    except Exception as exc:  # reported per item
        logger.debug("pic_box failed for %s: %s", point, exc)
        return BatchResult(None, None, exc)
    return BatchResult(box, trace, None)


def pic_batch(
    items: Iterable[tuple[GrayFrame, TrajectoryPoint]],
    config: PicConfig = PicConfig(),
    jobs: int = 1,
) -> Iterator[BatchResult]:
    """Run :func:`pic_box` over ``(frame, point)`` pairs, preserving input order.

    Failures are returned in the item's :class:`BatchResult` instead of
    aborting the stream.
    """
    if jobs <= 1:
        for item in items:
            yield _run_one(item, config)
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(lambda item: _run_one(item, config), items)
