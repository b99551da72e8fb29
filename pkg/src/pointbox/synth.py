"""Synthetic scenes with known ground truth, plus a closed-form trace oracle.

The oracle never looks at pixels.  For a single rectangular target of
intensity ``f`` on a background ``b`` the mean over a box ``B`` is

    mu(B) = b + (f - b) * |B & T| / |B|

which it evaluates with exact rational arithmetic from rectangle
intersection areas.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .imaging import BBox, GrayFrame, PixelRect, PointOutsideFrame
from .pic import Halt, IntensityTrace, PicConfig, TrajectoryPoint

__all__ = [
    "Target",
    "SceneSpec",
    "render",
    "oracle_trace",
    "oracle_box",
    "load_scene",
    "scene_from_dict",
    "scene_to_dict",
    "random_single_rect_scene",
]


@dataclass(frozen=True)
class Target:
    """A ``rect`` or ``ellipse`` of constant intensity.

    Rect pixels span ``[round(cx - w/2), +w) x [round(cy - h/2), +h)`` with
    halves rounded up.  Ellipse pixels are those whose centre lies inside the
    ellipse inscribed in the ``w x h`` box around ``(cx, cy)``.
    """

    cx: float
    cy: float
    width: int
    height: int
    intensity: int
    shape: str = "rect"
    border_crossing: bool = False

    def __post_init__(self):
        if self.shape not in ("rect", "ellipse"):
            raise ValueError(f"unknown target shape {self.shape!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("target size must be at least 1x1")
        if not 0 <= self.intensity <= 255:
            raise ValueError("target intensity must lie in [0, 255]")

    def rect(self) -> PixelRect:
        left = math.floor(Fraction(self.cx) - Fraction(self.width, 2) + Fraction(1, 2))
        top = math.floor(Fraction(self.cy) - Fraction(self.height, 2) + Fraction(1, 2))
        return PixelRect(left, top, self.width, self.height)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    background: int = 200
    targets: tuple[Target, ...] = field(default_factory=tuple)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("frame size must be at least 1x1")
        if not 0 <= self.background <= 255:
            raise ValueError("background must lie in [0, 255]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        object.__setattr__(self, "targets", tuple(self.targets))
        frame = PixelRect(0, 0, self.width, self.height)
        for t in self.targets:
            if not t.border_crossing and not frame.contains_rect(t.rect()):
                raise ValueError(f"target {t} leaves the frame; mark it border_crossing")


def _target_mask(target: Target, width: int, height: int) -> np.ndarray:
    r = target.rect()
    mask = np.zeros((height, width), dtype=bool)
    if target.shape == "rect":
        mask[max(r.top, 0):max(r.bottom, 0), max(r.left, 0):max(r.right, 0)] = True
        return mask
    ys, xs = np.mgrid[0:height, 0:width]
    u = (xs + 0.5 - target.cx) / (target.width / 2)
    v = (ys + 0.5 - target.cy) / (target.height / 2)
    return u * u + v * v <= 1.0


def render(spec: SceneSpec) -> tuple[GrayFrame, list[BBox]]:
    """Rasterize a scene.  Later targets paint over earlier ones."""
    canvas = np.full((spec.height, spec.width), float(spec.background))
    truths = []
    for target in spec.targets:
        mask = _target_mask(target, spec.width, spec.height)
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            raise ValueError(f"target {target} covers no pixels")
        canvas[mask] = target.intensity
        truths.append(
            BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1), "human")
        )
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        canvas = canvas + rng.normal(0.0, spec.noise_sigma, canvas.shape)
    pixels = np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)
    return GrayFrame(pixels), truths


def scene_from_dict(data: dict) -> SceneSpec:
    targets = tuple(Target(**t) for t in data.get("targets", ()))
    rest = {k: v for k, v in data.items() if k != "targets"}
    return SceneSpec(targets=targets, **rest)


def scene_to_dict(spec: SceneSpec) -> dict:
    return asdict(spec)


def load_scene(path: Union[str, os.PathLike]) -> SceneSpec:
    with open(path, encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def _overlap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> int:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    return max(w, 0) * max(h, 0)


def oracle_trace(
    spec: SceneSpec,
    point: TrajectoryPoint,
    config: PicConfig = PicConfig(),
) -> IntensityTrace:
    """Closed-form trace for a noise-free scene with exactly one rect target."""
    if spec.noise_sigma > 0:
        raise ValueError("oracle requires a noise-free scene")
    if len(spec.targets) != 1 or spec.targets[0].shape != "rect":
        raise ValueError("oracle requires exactly one rectangular target")
    W, H = spec.width, spec.height
    if not (0 <= point.x < W and 0 <= point.y < H):
        raise PointOutsideFrame(f"point ({point.x}, {point.y}) outside the frame")

    t = spec.targets[0]
    tr = t.rect()
    target = (tr.left, tr.top, tr.right, tr.bottom)
    b, f = Fraction(spec.background), Fraction(t.intensity)
    x0, y0 = Fraction(point.x), Fraction(point.y)
    eps = Fraction(config.epsilon)
    half = Fraction(1, 2)

    def box(step):
        w = config.w0 + step * config.delta
        h = config.h0 + step * config.delta
        left = math.floor(x0 - Fraction(w, 2) + half)
        top = math.floor(y0 - Fraction(h, 2) + half)
        return (max(left, 0), max(top, 0), min(left + w, W), min(top + h, H))

    def mean(r):
        area = (r[2] - r[0]) * (r[3] - r[1])
        return b + (f - b) * Fraction(_overlap(r, target), area)

    def as_rect(r):
        return PixelRect(r[0], r[1], r[2] - r[0], r[3] - r[1])

    full = (0, 0, W, H)
    current = box(0)
    mu = mean(current)
    means, boxes = [mu], [current]
    halt = Halt.MAX_ITERS
    step = 0
    while step < config.max_iters:
        if current == full:
            halt = Halt.SATURATED
            break
        step += 1
        nxt = box(step)
        if nxt == current:
            continue
        mu_next = mean(nxt)
        means.append(mu_next)
        boxes.append(nxt)
        if abs(mu_next - mu) < eps:
            halt = Halt.CONVERGED
            break
        current, mu = nxt, mu_next
    else:
        if current == full:
            halt = Halt.SATURATED
    return IntensityTrace(tuple(float(m) for m in means), tuple(as_rect(r) for r in boxes), halt)


def oracle_box(spec: SceneSpec, point: TrajectoryPoint, config: PicConfig = PicConfig()) -> PixelRect:
    """Box :func:`pic_box` should return, derived from :func:`oracle_trace`."""
    trace = oracle_trace(spec, point, config)
    if trace.halt is Halt.SATURATED:
        return PixelRect(0, 0, spec.width, spec.height)
    if trace.halt is Halt.CONVERGED:
        return trace.boxes[-1] if config.return_expanded else trace.boxes[-2]
    return trace.boxes[-1]


def random_single_rect_scene(
    rng: np.random.Generator,
    width: int = 96,
    height: int = 96,
    size_range: Sequence[int] = (3, 40),
) -> tuple[SceneSpec, TrajectoryPoint]:
    """A noise-free scene with one rect target and a point inside that target."""
    tw = int(rng.integers(size_range[0], size_range[1] + 1))
    th = int(rng.integers(size_range[0], size_range[1] + 1))
    left = int(rng.integers(0, width - tw + 1))
    top = int(rng.integers(0, height - th + 1))
    b = int(rng.integers(0, 256))
    f = int(rng.integers(0, 256))
    target = Target(left + tw / 2, top + th / 2, tw, th, f)
    px = left + float(rng.uniform(0, tw))
    py = top + float(rng.uniform(0, th))
    return SceneSpec(width, height, b, (target,)), TrajectoryPoint(px, py)
