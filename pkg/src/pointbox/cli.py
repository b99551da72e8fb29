"""``pointbox`` command line: annotate, evaluate, build, render, masks, synth.

Option values resolve as: command-line flag, then ``POINTBOX_<FLAG>``
environment variable (``--max-iters`` -> ``POINTBOX_MAX_ITERS``), then the
JSON file given by ``--config``, then the built-in default.

Exit codes: 0 success, 1 input error, 2 some items failed, 3 the
segmentation service could not be reached.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import warnings
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw

from . import __version__
from .baselines import FixedConfig, ThresholdConfig
from .dataset import (
    AnnotationRecord,
    TrajectoryFormatError,
    build_dataset,
    denormalize,
    emit_detection_label,
    emit_segmentation_label,
    find_frame,
    ingest_trajectory,
    load_plan,
    parse_detection_label,
    parse_segmentation_label,
    sample_frames,
)
from .imaging import load_frame, save_frame
from .metrics import EvalItem, default_methods, evaluate, format_table
from .pic import IntensityTrace, PicConfig, pic_batch
from .segmenter import MockSegmentationServer, ProtocolError, RetryPolicy, SegmenterClient, SegmenterUnavailable
from .synth import load_scene, render as render_scene

logger = logging.getLogger("pointbox")

EXIT_OK, EXIT_INPUT, EXIT_ITEMS, EXIT_SERVICE = 0, 1, 2, 3
ENV_PREFIX = "POINTBOX_"

# dest -> (type, default)
OPTIONS = {
    "w0": (int, 8),
    "h0": (int, None),
    "delta": (int, 5),
    "epsilon": (float, 4.0),
    "max_iters": (int, 64),
    "return_expanded": (bool, False),
    "stride": (int, None),
    "plan": (str, "canonical"),
    "threshold": (int, 150),
    "polarity": (str, "foreground_below"),
    "fixed_size": (int, 50),
    "endpoint": (str, None),
    "mock": (bool, False),
    "jobs": (int, os.cpu_count() or 1),
    "out": (str, None),
    "dump_traces": (bool, False),
    "methods": (str, "pic,fixed,threshold"),
    "attempts": (int, 3),
    "timeout": (float, 30.0),
}


class InputError(Exception):
    pass


def _to_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the environment, the config file, then defaults."""
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from exc
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    for dest, (kind, default) in OPTIONS.items():
        if not hasattr(args, dest):
            continue
        value = getattr(args, dest)
        if value is not None and value is not False:
            continue
        env = os.environ.get(ENV_PREFIX + dest.upper())
        raw = env if env is not None else file_cfg.get(dest)
        if raw is None:
            if value is None:
                setattr(args, dest, default)
            continue
        try:
            setattr(args, dest, _to_bool(raw) if kind is bool else kind(raw))
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad value {raw!r} for {dest}") from exc
    return args


def _pic_config(args) -> PicConfig:
    return PicConfig(
        w0=args.w0,
        h0=args.h0 if args.h0 is not None else args.w0,
        delta=args.delta,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        return_expanded=args.return_expanded,
    )


def _frame_name(index: int) -> str:
    return f"frame_{index:06d}"


def _load_points(args, default_stride: int):
    if args.trajectory is None:
        raise InputError("--trajectory is required")
    try:
        points = ingest_trajectory(args.trajectory)
    except OSError as exc:
        raise InputError(f"cannot read trajectory: {exc}") from exc
    except TrajectoryFormatError as exc:
        raise InputError(str(exc)) from exc
    stride = args.stride if args.stride is not None else default_stride
    if stride < 1:
        raise InputError("--stride must be >= 1")
    by_frame = defaultdict(list)
    for p in sample_frames(points, stride):
        by_frame[p.frame_index].append(p)
    return dict(sorted(by_frame.items()))


def _require_dir(path, flag) -> Path:
    if path is None:
        raise InputError(f"{flag} is required")
    p = Path(path)
    if not p.is_dir():
        raise InputError(f"{flag} {path} is not a directory")
    return p


def _write_if_changed(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.is_file() and path.read_bytes() == data:
        return
    path.write_bytes(data)


# ---------------------------------------------------------------- annotate


def cmd_annotate(args) -> int:
    frames_dir = _require_dir(args.frames, "--frames")
    if args.out is None:
        raise InputError("--out is required")
    out = Path(args.out)
    config = _pic_config(args)
    by_frame = _load_points(args, default_stride=1)

    failures = []
    frames = {}
    for index in by_frame:
        src = find_frame(frames_dir, index)
        if src is None:
            failures.append(f"frame {index}: missing frame file")
            continue
        try:
            frames[index] = load_frame(src)
        except (OSError, ValueError) as exc:
            failures.append(f"frame {index}: unreadable frame ({exc})")

    items = [(index, p) for index in frames for p in by_frame[index]]
    results = pic_batch(((frames[i], p) for i, p in items), config, jobs=args.jobs)
    boxes = defaultdict(list)
    traces = defaultdict(list)
    for (index, p), res in zip(items, results):
        if not res.ok:
            failures.append(f"frame {index}: point ({p.x}, {p.y}): {res.error}")
            continue
        boxes[index].append(res.box)
        traces[index].append({"x": p.x, "y": p.y, "trace": res.trace.to_dict(),
                              "box": [res.box.left, res.box.top, res.box.width, res.box.height]})

    for index, frame in frames.items():
        record = AnnotationRecord(
            _frame_name(index), index, (frame.width, frame.height), tuple(boxes[index])
        )
        _write_if_changed(out / f"{_frame_name(index)}.txt", emit_detection_label(record).encode())
        if args.dump_traces:
            dump = {"frame": index, "points": traces[index]}
            _write_if_changed(
                out / "traces" / f"{_frame_name(index)}.json",
                (json.dumps(dump, indent=1, sort_keys=True) + "\n").encode(),
            )
    print(f"annotated {len(frames)} frames, {sum(len(b) for b in boxes.values())} boxes")
    return _report(failures)


def _report(failures) -> int:
    if not failures:
        return EXIT_OK
    print(f"{len(failures)} item(s) failed:", file=sys.stderr)
    for line in failures:
        print(f"  {line}", file=sys.stderr)
    return EXIT_ITEMS


# ---------------------------------------------------------------- evaluate


def _match_truth(points, truths):
    """Pair points with truth boxes by nearest centre (optimal assignment)."""
    from scipy.optimize import linear_sum_assignment

    cost = np.array(
        [[(t.left + t.width / 2 - p.x) ** 2 + (t.top + t.height / 2 - p.y) ** 2 for t in truths] for p in points]
    )
    rows, cols = linear_sum_assignment(cost)
    return [(points[r], truths[c]) for r, c in zip(rows, cols)]


def cmd_evaluate(args) -> int:
    frames_dir = _require_dir(args.frames, "--frames")
    truth_dir = _require_dir(args.truth, "--truth")
    names = [m.strip() for m in args.methods.split(",") if m.strip()]
    available = default_methods(
        _pic_config(args),
        FixedConfig(args.fixed_size, args.fixed_size),
        ThresholdConfig(threshold=args.threshold, polarity=args.polarity),
    )
    unknown = [m for m in names if m not in available]
    if unknown or not names:
        raise InputError(f"unknown methods {unknown}; choose from {sorted(available)}")
    by_frame = _load_points(args, default_stride=1)

    # alignment is checked in full before any extractor runs
    corpus, problems = [], []
    for index, points in by_frame.items():
        src = find_frame(frames_dir, index)
        truth_path = truth_dir / f"{_frame_name(index)}.txt"
        if src is None:
            problems.append(f"frame {index}: missing frame file")
            continue
        if not truth_path.is_file():
            problems.append(f"frame {index}: missing truth label {truth_path.name}")
            continue
        try:
            frame = load_frame(src)
            labels = parse_detection_label(truth_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            problems.append(f"frame {index}: {exc}")
            continue
        truths = [denormalize(lab, (frame.width, frame.height)) for lab in labels]
        if len(truths) != len(points):
            problems.append(f"frame {index}: {len(points)} points but {len(truths)} truth boxes")
            continue
        for k, (p, t) in enumerate(_match_truth(points, truths)):
            corpus.append(EvalItem(f"{_frame_name(index)}#{k}", frame, p, t))
    if problems:
        raise InputError("truth labels do not align with frames:\n  " + "\n  ".join(problems))
    if not corpus:
        raise InputError("no items to evaluate")

    report = evaluate(corpus, {m: available[m] for m in names})
    print(format_table(report.summaries))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(report.summary_json(), encoding="utf-8")
        (out / "records.jsonl").write_text(report.records_jsonl(), encoding="utf-8")
    failed = sum(s.failures for s in report.summaries)
    return EXIT_ITEMS if failed else EXIT_OK


# ---------------------------------------------------------------- build / masks


class _ServiceSegmenter:
    def __init__(self, client: SegmenterClient):
        self.client = client

    def __call__(self, frame, boxes):
        return [r.mask for r in self.client.segment_boxes(frame, boxes)]


def _policy(args) -> RetryPolicy:
    return RetryPolicy(attempts=args.attempts, timeout=args.timeout)


def _with_segmenter(args, fn, required: bool):
    """Call ``fn(segmenter_or_None)`` with a client for --endpoint or a mock for --mock."""
    if args.mock:
        with MockSegmentationServer() as server:
            return fn(_ServiceSegmenter(SegmenterClient(server.url, _policy(args))))
    if args.endpoint:
        return fn(_ServiceSegmenter(SegmenterClient(args.endpoint, _policy(args))))
    if required:
        raise InputError("--endpoint or --mock is required")
    return fn(None)


def cmd_build(args) -> int:
    root = _require_dir(args.root, "--root")
    if args.out is None:
        raise InputError("--out is required")
    try:
        plan = load_plan(args.plan)
    except (OSError, ValueError) as exc:
        raise InputError(f"bad split plan: {exc}") from exc
    stride = args.stride if args.stride is not None else 10
    config = _pic_config(args)

    def run(segmenter):
        return build_dataset(root, args.out, plan, stride, config, segmenter, jobs=args.jobs)

    try:
        manifest = _with_segmenter(args, run, required=False)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from exc
    except TrajectoryFormatError as exc:
        raise InputError(str(exc)) from exc
    except (SegmenterUnavailable, ProtocolError) as exc:
        print(f"segmentation service failure: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    counts = ", ".join(f"{s}={v['images']}" for s, v in manifest["splits"].items())
    print(f"built dataset: {counts}; gaps={len(manifest['gaps'])}")
    failures = [f"{g['sequence']} frame {g['frame']}: {g['reason']}" for g in manifest["gaps"]]
    failures += [f"{d['sequence']} frame {d['frame']}: point outside frame" for d in manifest["dropped_points"]]
    return _report(failures)


def cmd_masks(args) -> int:
    frames_dir = _require_dir(args.frames, "--frames")
    labels_dir = _require_dir(args.labels, "--labels")
    if args.out is None:
        raise InputError("--out is required")
    out = Path(args.out)

    def run(segmenter):
        outputs, failures = {}, []
        for label_path in sorted(labels_dir.glob("frame_*.txt")):
            try:
                index = int(label_path.stem.split("_")[1])
            except (IndexError, ValueError):
                continue
            src = find_frame(frames_dir, index)
            if src is None:
                failures.append(f"{label_path.name}: missing frame file")
                continue
            frame = load_frame(src)
            size = (frame.width, frame.height)
            try:
                boxes = [denormalize(lab, size, "pic") for lab in parse_detection_label(label_path.read_text())]
            except ValueError as exc:
                failures.append(f"{label_path.name}: {exc}")
                continue
            if not boxes:
                outputs[label_path.name] = ""
                continue
            masks = segmenter(frame, boxes)
            record = AnnotationRecord(src.name, index, size, tuple(boxes), tuple(masks))
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                outputs[label_path.name] = emit_segmentation_label(record)
            failures.extend(f"{label_path.name}: {w.message}" for w in caught)
        return outputs, failures

    try:
        outputs, failures = _with_segmenter(args, run, required=True)
    except (SegmenterUnavailable, ProtocolError) as exc:
        print(f"segmentation service failure: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    for name, text in outputs.items():
        _write_if_changed(out / name, text.encode())
    print(f"wrote {len(outputs)} segmentation label files")
    return _report(failures)


# ---------------------------------------------------------------- render


BOX_COLOR = (255, 40, 40)
TRACE_COLOR = (40, 160, 255)
POLY_COLOR = (40, 220, 80)


def cmd_render(args) -> int:
    frames_dir = _require_dir(args.frames, "--frames")
    labels_dir = _require_dir(args.labels, "--labels")
    traces_dir = Path(args.traces) if args.traces else None
    if args.out is None:
        raise InputError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    frames = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    for src in frames:
        with Image.open(src) as img:
            canvas = img.convert("RGB")
        label_path = labels_dir / f"{src.stem}.txt"
        if not label_path.is_file():
            logger.warning("no label for %s; writing it unannotated", src.name)
        else:
            _draw_labels(canvas, label_path.read_text(encoding="utf-8"))
        if traces_dir is not None and (traces_dir / f"{src.stem}.json").is_file():
            dump = json.loads((traces_dir / f"{src.stem}.json").read_text(encoding="utf-8"))
            _draw_traces(canvas, dump)
        buf = _png_bytes(canvas)
        _write_if_changed(out / f"{src.stem}.png", buf)
    print(f"rendered {len(frames)} frames")
    return EXIT_OK


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _draw_labels(canvas: Image.Image, text: str) -> None:
    draw = ImageDraw.Draw(canvas)
    size = canvas.size
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if len(parts) == 5:
            box = denormalize(tuple([int(parts[0])] + [float(v) for v in parts[1:]]), size)
            draw.rectangle([box.left, box.top, box.right - 1, box.bottom - 1], outline=BOX_COLOR)
        else:
            (poly,) = parse_segmentation_label(line)
            pts = [(x * size[0], y * size[1]) for x, y in poly]
            draw.polygon(pts, outline=POLY_COLOR)


def _draw_traces(canvas: Image.Image, dump: dict) -> None:
    draw = ImageDraw.Draw(canvas)
    for entry in dump.get("points", []):
        trace = IntensityTrace.from_dict(entry["trace"])
        for b in trace.boxes:
            draw.rectangle([b.left, b.top, b.right - 1, b.bottom - 1], outline=TRACE_COLOR)


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    if args.out is None:
        raise InputError("--out is required")
    try:
        spec = load_scene(args.scene)
    except (OSError, ValueError, TypeError) as exc:
        raise InputError(f"bad scene file: {exc}") from exc
    frame, truths = render_scene(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_frame(frame, out)
    if args.truth:
        record = AnnotationRecord(out.name, 0, (frame.width, frame.height), tuple(truths))
        _write_if_changed(Path(args.truth), emit_detection_label(record).encode())
    print(f"rendered {frame.width}x{frame.height} scene with {len(truths)} target(s)")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_pic_flags(p):
    g = p.add_argument_group("patch intensity convergence")
    g.add_argument("--w0", type=int, help="initial patch width in pixels (default 8)")
    g.add_argument("--h0", type=int, help="initial patch height (default: same as --w0)")
    g.add_argument("--delta", type=int, help="growth per step in pixels (default 5)")
    g.add_argument("--epsilon", type=float, help="mean-intensity change that stops growth (default 4)")
    g.add_argument("--max-iters", type=int, help="maximum number of expansions (default 64)")
    g.add_argument("--return-expanded", action="store_true", default=None,
                   help="on convergence return the last expanded box instead of the one before it")


def _add_common(p):
    p.add_argument("--config", help="JSON file with option defaults (keys are flag names)")
    p.add_argument("--jobs", type=int, help="worker count (default: CPU count)")
    p.add_argument("--out", help="output directory (synth: output PNG path)")
    p.add_argument("-v", "--verbose", action="store_true", help="log debug messages")


def _add_segmenter_flags(p):
    g = p.add_argument_group("segmentation service")
    g.add_argument("--endpoint", help="URL of the box-prompted segmentation service")
    g.add_argument("--mock", action="store_true", default=None,
                   help="use the bundled mock service (echoes prompt boxes as masks)")
    g.add_argument("--attempts", type=int, help="request attempts per chunk (default 3)")
    g.add_argument("--timeout", type=float, help="request timeout in seconds (default 30)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointbox",
        description="Box and mask annotations from trajectory points.",
        epilog=f"Options can also be set through {ENV_PREFIX}<FLAG> environment variables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="derive boxes for every annotated frame")
    p.add_argument("--frames", help="directory of frame_%%06d.<ext> images")
    p.add_argument("--trajectory", help="trajectory table (frame,x,y)")
    p.add_argument("--stride", type=int, help="keep every Nth annotated frame (default 1)")
    p.add_argument("--dump-traces", action="store_true", default=None,
                   help="write per-frame intensity traces under OUT/traces/")
    _add_pic_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("evaluate", help="compare extractors against truth boxes (IoU, runtime)")
    p.add_argument("--frames", help="directory of frame_%%06d.<ext> images")
    p.add_argument("--trajectory", help="trajectory table (frame,x,y)")
    p.add_argument("--truth", help="directory of truth detection labels frame_%%06d.txt")
    p.add_argument("--methods", help="comma-separated subset of pic,fixed,threshold")
    p.add_argument("--stride", type=int, help="keep every Nth annotated frame (default 1)")
    p.add_argument("--threshold", type=int, help="thresholding baseline cut-off (default 150)")
    p.add_argument("--polarity", choices=["foreground_below", "foreground_above"],
                   help="which side of the threshold is foreground (default foreground_below)")
    p.add_argument("--fixed-size", type=int, help="fixed baseline box side in pixels (default 50)")
    _add_pic_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build", help="assemble a split dataset from d*/c* sequences")
    p.add_argument("--root", help="directory holding d<dataset>/c<camera>/ sequences")
    p.add_argument("--plan", help="split plan file (d1/c0=train lines) or 'canonical'")
    p.add_argument("--stride", type=int, help="keep every Nth annotated frame (default 10)")
    _add_pic_flags(p)
    _add_segmenter_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("render", help="draw labels (and optional traces) onto frames")
    p.add_argument("--frames", help="directory of frame images")
    p.add_argument("--labels", help="directory of detection or segmentation labels")
    p.add_argument("--traces", help="directory of trace dumps written by annotate --dump-traces")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("masks", help="polygon labels from boxes via a segmentation service")
    p.add_argument("--frames", help="directory of frame_%%06d.<ext> images")
    p.add_argument("--labels", help="directory of detection labels frame_%%06d.txt")
    _add_segmenter_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("synth", help="render a synthetic scene from a JSON spec")
    p.add_argument("--scene", required=True, help="scene spec JSON")
    p.add_argument("--truth", help="also write the truth boxes as a detection label file")
    _add_common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        resolve(args)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
