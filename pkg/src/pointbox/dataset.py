"""Trajectory ingestion, frame sampling, split plans and label emission.

Input layout::

    root/d{dataset}/c{camera}/*.csv            trajectory tables, header ``frame,x,y``
    root/d{dataset}/c{camera}/frame_%06d.png   pre-extracted frames (png/jpg/jpeg)

Output layout::

    out/images/{split}/d{D}_c{C}_frame_%06d.<ext>
    out/labels/{split}/d{D}_c{C}_frame_%06d.txt
    out/labels_seg/{split}/...                  only when a segmenter is given
    out/manifest.json
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import shutil
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import __version__
from .imaging import BBox, GrayFrame, PixelRect, PointOutsideFrame, load_frame
from .pic import PicConfig, TrajectoryPoint, pic_box
from .segmenter.codecs import MaskRLE, mask_to_polygon

__all__ = [
    "SPLITS",
    "CAMERAS",
    "FRAME_TABLE",
    "SPLIT_IMAGE_COUNTS",
    "SequenceKey",
    "SplitPlan",
    "canonical_plan",
    "load_plan",
    "parse_plan",
    "TrajectoryFormatError",
    "ingest_trajectory",
    "sample_frames",
    "assign_split",
    "AnnotationRecord",
    "emit_detection_label",
    "parse_detection_label",
    "denormalize",
    "emit_segmentation_label",
    "parse_segmentation_label",
    "label_path_for",
    "find_frame",
    "build_dataset",
]

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
FRAME_SUFFIXES = (".png", ".jpg", ".jpeg")

# cameras per source dataset
CAMERAS = {1: range(0, 4), 2: range(0, 4), 3: range(0, 6), 4: range(0, 7), 5: range(0, 6)}

# (dataset, camera) -> (frame count, width, height) of the source videos
FRAME_TABLE = {
    (1, 0): (5334, 1920, 1080), (1, 1): (4941, 1920, 1080),
    (1, 2): (8016, 1920, 1080), (1, 3): (4080, 1920, 1080),
    (2, 0): (4377, 1920, 1080), (2, 1): (4749, 1920, 1080),
    (2, 2): (8688, 1920, 1080), (2, 3): (4332, 1920, 1080),
    (3, 0): (33875, 1920, 1080), (3, 1): (19960, 1920, 1080),
    (3, 2): (17166, 3840, 2160), (3, 3): (14196, 1440, 1080),
    (3, 4): (18900, 1920, 1080), (3, 5): (28080, 1920, 1080),
    (4, 0): (31075, 1920, 1080), (4, 1): (15409, 1920, 1080),
    (4, 2): (15678, 1920, 1080), (4, 3): (10933, 3840, 2160),
    (4, 4): (17640, 1920, 1080), (4, 5): (32016, 1920, 1080),
    (4, 6): (11292, 1440, 1080),
    (5, 0): (20970, 1920, 1080), (5, 1): (28047, 1920, 1080),
    (5, 2): (31860, 2704, 2028), (5, 3): (31992, 1920, 1080),
    (5, 4): (21523, 2288, 1080), (5, 5): (17550, 1920, 1080),
}

# (dataset, camera) -> (split, image count) for the reference split
SPLIT_IMAGE_COUNTS = {
    (1, 0): ("train", 291), (1, 1): ("valid", 303), (1, 2): ("train", 394), (1, 3): ("test", 348),
    (2, 0): ("test", 237), (2, 1): ("train", 343), (2, 2): ("train", 809), (2, 3): ("valid", 426),
    (3, 0): ("train", 3190), (3, 1): ("train", 841), (3, 2): ("valid", 1067),
    (3, 3): ("train", 638), (3, 4): ("test", 1253), (3, 5): ("train", 1303),
    (4, 0): ("test", 2355), (4, 1): ("train", 416), (4, 2): ("train", 701), (4, 3): ("train", 727),
    (4, 4): ("valid", 924), (4, 5): ("train", 1110), (4, 6): ("test", 385),
}


@dataclass(frozen=True, order=True)
class SequenceKey:
    dataset_id: int
    camera_id: int

    def __post_init__(self):
        cams = CAMERAS.get(self.dataset_id)
        if cams is None or self.camera_id not in cams:
            raise ValueError(f"no camera {self.camera_id} in dataset {self.dataset_id}")

    @property
    def name(self) -> str:
        return f"d{self.dataset_id}/c{self.camera_id}"

    @property
    def slug(self) -> str:
        return f"d{self.dataset_id}_c{self.camera_id}"

    @classmethod
    def parse(cls, text: str) -> "SequenceKey":
        m = re.fullmatch(r"d(\d+)[/_]c(\d+)", text.strip())
        if not m:
            raise ValueError(f"bad sequence key {text!r}; expected d<dataset>/c<camera>")
        return cls(int(m.group(1)), int(m.group(2)))


SPLIT_LABELS = SPLITS + ("excluded",)


@dataclass(frozen=True)
class SplitPlan:
    assignments: Mapping[SequenceKey, str]

    def __post_init__(self):
        for key, label in self.assignments.items():
            if label not in SPLIT_LABELS:
                raise ValueError(f"{key.name}: unknown split {label!r}")
        object.__setattr__(self, "assignments", dict(sorted(self.assignments.items())))

    def __contains__(self, key) -> bool:
        return key in self.assignments

    def to_text(self) -> str:
        return "".join(f"{k.name}={v}\n" for k, v in self.assignments.items())


def canonical_plan() -> SplitPlan:
    """Reference split; dataset 5 has no 2-D trajectories and is held out."""
    plan = {SequenceKey(*k): split for k, (split, _) in SPLIT_IMAGE_COUNTS.items()}
    for cam in CAMERAS[5]:
        plan[SequenceKey(5, cam)] = "excluded"
    return SplitPlan(plan)


def parse_plan(text: str) -> SplitPlan:
    """Parse ``d1/c0=train`` lines; blank lines and ``#`` comments are ignored."""
    plan: dict[SequenceKey, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=split, got {raw!r}")
        key_text, label = (part.strip() for part in line.split("=", 1))
        key = SequenceKey.parse(key_text)
        if key in plan:
            raise ValueError(f"line {lineno}: {key.name} assigned twice")
        plan[key] = label
    return SplitPlan(plan)


def load_plan(source: Union[str, os.PathLike]) -> SplitPlan:
    if str(source) == "canonical":
        return canonical_plan()
    return parse_plan(Path(source).read_text(encoding="utf-8"))


def assign_split(key: SequenceKey, plan: SplitPlan) -> str:
    try:
        return plan.assignments[key]
    except KeyError:
        raise KeyError(f"sequence {key.name} is not in the split plan") from None


class TrajectoryFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        where = f"{path or '<trajectory>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def ingest_trajectory(
    source: Union[str, os.PathLike, io.TextIOBase],
    sequence_id: str = "",
) -> list[TrajectoryPoint]:
    """Read a ``frame,x,y`` table into points sorted by frame index.

    Coordinates outside the image are kept; extractors deal with them.
    Out-of-order rows trigger a warning and are sorted (stably).
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return ingest_trajectory(fh, sequence_id)
    path = getattr(source, "name", None)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise TrajectoryFormatError("missing header", 1, path)
    if [h.strip().lower() for h in header] != ["frame", "x", "y"]:
        raise TrajectoryFormatError(f"expected header frame,x,y, got {','.join(header)}", 1, path)
    points = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise TrajectoryFormatError(f"expected 3 fields, got {len(row)}", lineno, path)
        try:
            frame = int(row[0])
            x, y = float(row[1]), float(row[2])
        except ValueError as exc:
            raise TrajectoryFormatError(str(exc), lineno, path) from None
        if frame < 0 or not (np.isfinite(x) and np.isfinite(y)):
            raise TrajectoryFormatError("negative frame index or non-finite coordinate", lineno, path)
        points.append(TrajectoryPoint(x, y, frame, sequence_id))
    indices = [p.frame_index for p in points]
    if any(b < a for a, b in zip(indices, indices[1:])):
        warnings.warn(f"{path or 'trajectory'}: frame indices not monotonic; reordering", stacklevel=2)
        points.sort(key=lambda p: p.frame_index)
    return points


def sample_frames(points: Iterable[TrajectoryPoint], stride: int = 10) -> list[TrajectoryPoint]:
    """Keep every ``stride``-th frame counted from the first annotated frame.

    Only frames that carry a point can be selected, so gaps in the
    annotation never produce unlabeled samples.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    points = list(points)
    if not points:
        return []
    anchor = min(p.frame_index for p in points)
    return [p for p in points if (p.frame_index - anchor) % stride == 0]


@dataclass(frozen=True)
class AnnotationRecord:
    image_path: str
    frame_index: int
    image_size: tuple[int, int]
    boxes: tuple[BBox, ...] = ()
    masks: Optional[tuple[MaskRLE, ...]] = None

    def __post_init__(self):
        w, h = self.image_size
        frame = PixelRect(0, 0, w, h)
        for b in self.boxes:
            if not frame.contains_rect(b):
                raise ValueError(f"box {b} exceeds image size {w}x{h}")
        if self.masks is not None and len(self.masks) != len(self.boxes):
            raise ValueError("masks must align 1:1 with boxes")


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def emit_detection_label(record: AnnotationRecord) -> str:
    """``0 cx cy w h`` per box, normalized by image size, six decimals."""
    w, h = record.image_size
    lines = []
    for b in record.boxes:
        cx = (b.left + b.width / 2) / w
        cy = (b.top + b.height / 2) / h
        lines.append(f"0 {_fmt(cx)} {_fmt(cy)} {_fmt(b.width / w)} {_fmt(b.height / h)}\n")
    return "".join(lines)


def parse_detection_label(text: str) -> list[tuple[int, float, float, float, float]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        cls, rest = int(parts[0]), [float(p) for p in parts[1:]]
        out.append((cls, *rest))
    return out


def denormalize(
    label: tuple[int, float, float, float, float],
    image_size: tuple[int, int],
    source: str = "human",
) -> BBox:
    """Nearest integer box for a normalized ``(class, cx, cy, w, h)`` label."""
    _, cx, cy, bw, bh = label
    W, H = image_size
    width = max(1, int(round(bw * W)))
    height = max(1, int(round(bh * H)))
    left = int(round(cx * W - width / 2))
    top = int(round(cy * H - height / 2))
    left = min(max(left, 0), W - 1)
    top = min(max(top, 0), H - 1)
    return BBox(left, top, min(width, W - left), min(height, H - top), source)


def emit_segmentation_label(record: AnnotationRecord) -> str:
    """``0 x1 y1 x2 y2 ...`` per instance: the normalized outer contour of each mask."""
    if not record.masks:
        raise ValueError("record carries no masks")
    w, h = record.image_size
    lines = []
    for i, mask in enumerate(record.masks):
        if (mask.width, mask.height) != (w, h):
            raise ValueError(f"mask {i} is {mask.width}x{mask.height}, image is {w}x{h}")
        if mask.area == 0:
            warnings.warn(f"{record.image_path}: mask {i} is empty; instance skipped", stacklevel=2)
            continue
        coords = []
        for x, y in mask_to_polygon(mask):
            coords.append(_fmt(x / w))
            coords.append(_fmt(y / h))
        lines.append("0 " + " ".join(coords) + "\n")
    return "".join(lines)


def parse_segmentation_label(text: str) -> list[list[tuple[float, float]]]:
    out = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        vals = [float(p) for p in parts[1:]]
        out.append(list(zip(vals[0::2], vals[1::2])))
    return out


def label_path_for(image_path: Union[str, os.PathLike], tree: str = "labels") -> Path:
    """``images/<split>/x.png`` -> ``<tree>/<split>/x.txt``."""
    p = Path(image_path)
    parts = list(p.parts)
    try:
        idx = len(parts) - 1 - parts[::-1].index("images")
    except ValueError:
        raise ValueError(f"{image_path} is not under an images/ directory") from None
    parts[idx] = tree
    return Path(*parts).with_suffix(".txt")


def find_frame(directory: Path, frame_index: int) -> Optional[Path]:
    for suffix in FRAME_SUFFIXES:
        candidate = directory / f"frame_{frame_index:06d}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _discover(root: Path) -> list[tuple[SequenceKey, Path]]:
    found = []
    for ddir in sorted(root.glob("d*")):
        if not ddir.is_dir() or not re.fullmatch(r"d\d+", ddir.name):
            continue
        for cdir in sorted(ddir.glob("c*")):
            if cdir.is_dir() and re.fullmatch(r"c\d+", cdir.name) and any(cdir.glob("*.csv")):
                found.append((SequenceKey.parse(f"{ddir.name}/{cdir.name}"), cdir))
    return found


# frame, boxes -> masks; used to attach instance masks to a record
Segmenter = Callable[[GrayFrame, Sequence[BBox]], Sequence[MaskRLE]]


@dataclass
class _SequenceResult:
    key: SequenceKey
    split: str
    images: int = 0
    boxes: int = 0
    gaps: list[dict] = field(default_factory=list)
    dropped: list[dict] = field(default_factory=list)


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.is_file() and path.read_bytes() == data:
        return
    path.write_bytes(data)


def _copy(src: Path, dst: Path) -> None:
    dst.parent.mkdir(parents=True, exist_ok=True)
    if dst.is_file() and dst.stat().st_size == src.stat().st_size and dst.read_bytes() == src.read_bytes():
        return
    shutil.copyfile(src, dst)


def _build_sequence(key, cdir, split, out, stride, config, segmenter) -> _SequenceResult:
    res = _SequenceResult(key, split)
    points: list[TrajectoryPoint] = []
    for csv_path in sorted(cdir.glob("*.csv")):
        points.extend(ingest_trajectory(csv_path, key.name))
    points.sort(key=lambda p: p.frame_index)
    by_frame: dict[int, list[TrajectoryPoint]] = defaultdict(list)
    for p in sample_frames(points, stride):
        by_frame[p.frame_index].append(p)

    for frame_index in sorted(by_frame):
        src = find_frame(cdir, frame_index)
        if src is None:
            res.gaps.append({"sequence": key.name, "frame": frame_index, "reason": "missing frame file"})
            continue
        try:
            frame = load_frame(src)
        except (OSError, ValueError) as exc:
            res.gaps.append({"sequence": key.name, "frame": frame_index, "reason": f"unreadable: {exc}"})
            continue
        boxes = []
        for p in by_frame[frame_index]:
            try:
                box, _ = pic_box(frame, p, config)
            except PointOutsideFrame:
                res.dropped.append({"sequence": key.name, "frame": frame_index, "x": p.x, "y": p.y})
                continue
            boxes.append(box)
        name = f"{key.slug}_frame_{frame_index:06d}{src.suffix.lower()}"
        image_rel = Path("images") / split / name
        masks = None
        if segmenter is not None and boxes:
            masks = tuple(segmenter(frame, boxes))
        record = AnnotationRecord(
            image_rel.as_posix(), frame_index, (frame.width, frame.height), tuple(boxes), masks
        )
        _copy(src, out / image_rel)
        _write(out / label_path_for(image_rel), emit_detection_label(record).encode())
        if segmenter is not None:
            seg = emit_segmentation_label(record) if masks else ""
            _write(out / label_path_for(image_rel, "labels_seg"), seg.encode())
        res.images += 1
        res.boxes += len(boxes)
    return res


def build_dataset(
    root: Union[str, os.PathLike],
    out: Union[str, os.PathLike],
    plan: Optional[SplitPlan] = None,
    stride: int = 10,
    config: PicConfig = PicConfig(),
    segmenter: Optional[Segmenter] = None,
    jobs: int = 1,
) -> dict:
    """Annotate every planned sequence under ``root`` and write the dataset tree.

    Returns the manifest, which is also written to ``out/manifest.json``.
    Sequences planned as ``excluded`` are listed but not emitted.  Missing
    frame files become ``gaps`` entries rather than errors.  Nothing is
    written when ``root`` holds no sequences.
    """
    root, out = Path(root), Path(out)
    plan = plan or canonical_plan()
    if stride < 1:
        raise ValueError("stride must be >= 1")
    sequences = _discover(root)
    # unknown keys are an input error; check before doing any work
    splits = {key: assign_split(key, plan) for key, _ in sequences}

    manifest = {
        "tool": "pointbox",
        "version": __version__,
        "config": {"pic": asdict(config), "stride": stride, "segmentation": segmenter is not None},
        "plan": {k.name: v for k, v in plan.assignments.items()},
        "sequences": {},
        "splits": {s: {"images": 0, "boxes": 0} for s in SPLITS},
        "gaps": [],
        "dropped_points": [],
    }
    if not sequences:
        return manifest

    todo = [(k, d) for k, d in sequences if splits[k] != "excluded"]

    def work(item):
        key, cdir = item
        return _build_sequence(key, cdir, splits[key], out, stride, config, segmenter)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, todo))
    else:
        results = [work(item) for item in todo]

    for key, _ in sequences:
        if splits[key] == "excluded":
            manifest["sequences"][key.name] = {"split": "excluded", "images": 0, "boxes": 0}
    for res in results:
        manifest["sequences"][res.key.name] = {"split": res.split, "images": res.images, "boxes": res.boxes}
        manifest["splits"][res.split]["images"] += res.images
        manifest["splits"][res.split]["boxes"] += res.boxes
        manifest["gaps"].extend(res.gaps)
        manifest["dropped_points"].extend(res.dropped)
    manifest["sequences"] = dict(sorted(manifest["sequences"].items()))

    _write(out / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return manifest
