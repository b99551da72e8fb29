"""IoU, per-method averaging and extractor timing."""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .baselines import FixedConfig, ThresholdConfig, fixed_box, threshold_box
from .imaging import BBox, GrayFrame, PixelRect
from .pic import PicConfig, TrajectoryPoint, pic_box

__all__ = [
    "iou",
    "EvalItem",
    "EvalRecord",
    "MethodSummary",
    "EvalReport",
    "evaluate",
    "time_extractor",
    "default_methods",
    "format_table",
]

logger = logging.getLogger(__name__)

Extractor = Callable[[GrayFrame, TrajectoryPoint], BBox]


def iou(a: PixelRect, b: PixelRect) -> float:
    """Intersection over union of two half-open integer rectangles."""
    if a.width <= 0 or a.height <= 0 or b.width <= 0 or b.height <= 0:
        raise ValueError("iou requires boxes with positive area")
    iw = min(a.left + a.width, b.left + b.width) - max(a.left, b.left)
    ih = min(a.top + a.height, b.top + b.height) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.width * a.height + b.width * b.height - inter
    return inter / union


@dataclass(frozen=True)
class EvalItem:
    item_id: str
    frame: GrayFrame
    point: TrajectoryPoint
    truth: BBox


@dataclass(frozen=True)
class EvalRecord:
    item_id: str
    method: str
    predicted: Optional[BBox]
    truth: BBox
    iou: float
    elapsed: float
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        def box(b):
            return None if b is None else [b.left, b.top, b.width, b.height]

        return {
            "item_id": self.item_id,
            "method": self.method,
            "predicted": box(self.predicted),
            "truth": box(self.truth),
            "iou": self.iou,
            "elapsed": self.elapsed,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass(frozen=True)
class MethodSummary:
    method: str
    mean_iou: float
    mean_elapsed: float
    n: int
    failures: int = 0


@dataclass
class EvalReport:
    summaries: list[MethodSummary]
    records: list[EvalRecord] = field(default_factory=list)

    def summary(self, method: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)

    def summary_json(self) -> str:
        return json.dumps([asdict(s) for s in self.summaries], indent=2, sort_keys=True) + "\n"

    def records_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)


def default_methods(
    pic: PicConfig = PicConfig(),
    fixed: FixedConfig = FixedConfig(),
    threshold: ThresholdConfig = ThresholdConfig(),
) -> dict[str, Extractor]:
    return {
        "pic": lambda frame, point: pic_box(frame, point, pic)[0],
        "fixed": lambda frame, point: fixed_box(point, frame, fixed),
        "threshold": lambda frame, point: threshold_box(frame, point, threshold),
    }


def evaluate(corpus: Iterable[EvalItem], methods: Mapping[str, Extractor]) -> EvalReport:
    """Run every method on every item and average IoU and wall time per method.

    A method that raises on an item scores IoU 0 for it and is flagged; the
    item still counts towards ``n``.
    """
    items = list(corpus)
    records: list[EvalRecord] = []
    for name, extractor in methods.items():
        for item in items:
            start = time.perf_counter()
            try:
                pred = extractor(item.frame, item.point)
            except Exception as exc:
                elapsed = time.perf_counter() - start
                logger.warning("%s failed on %s: %s", name, item.item_id, exc)
                records.append(
                    EvalRecord(item.item_id, name, None, item.truth, 0.0, elapsed, True, str(exc))
                )
                continue
            elapsed = time.perf_counter() - start
            records.append(
                EvalRecord(item.item_id, name, pred, item.truth, iou(pred, item.truth), elapsed)
            )
    summaries = []
    for name in methods:
        rows = [r for r in records if r.method == name]
        if not rows:
            continue
        summaries.append(
            MethodSummary(
                method=name,
                mean_iou=statistics.fmean(r.iou for r in rows),
                mean_elapsed=statistics.fmean(r.elapsed for r in rows),
                n=len(rows),
                failures=sum(r.failed for r in rows),
            )
        )
    return EvalReport(summaries, records)


def time_extractor(
    extractor: Extractor,
    item: tuple[GrayFrame, TrajectoryPoint] | EvalItem,
    repeats: int = 100,
) -> float:
    """Median wall time (seconds) of ``repeats`` serial calls on a decoded frame."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if isinstance(item, EvalItem):
        frame, point = item.frame, item.point
    else:
        frame, point = item
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        extractor(frame, point)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def format_table(summaries: Sequence[MethodSummary]) -> str:
    lines = [f"{'method':<12} {'mean IoU':>9} {'runtime (s)':>12} {'n':>6} {'failed':>7}"]
    for s in summaries:
        lines.append(
            f"{s.method:<12} {s.mean_iou:>9.3f} {s.mean_elapsed:>12.4f} {s.n:>6d} {s.failures:>7d}"
        )
    return "\n".join(lines)
