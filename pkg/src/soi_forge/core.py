"""Geometric primitives shared across the toolkit.

Boxes are axis-aligned (x, y, w, h) in image pixels with a top-left origin,
matching the LaSOT ground-truth text convention. Coordinates are real-valued;
rasterization to integer pixels is an explicit step (see :mod:`soi_forge.oim`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: left edge x, top edge y, width w > 0, height h > 0."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate: {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box (w, h must be > 0): {self}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        """Derived (x1, y1, x2, y2) corner view."""
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dims must be positive: {self}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    # rounding can push inter a hair above the union for identical boxes
    return min(1.0, inter / (a.area + b.area - inter))


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between box centers, in pixels."""
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def normalized_center_distance(pred: BoundingBox, gt: BoundingBox) -> float:
    """Center offset normalized by the ground-truth box size."""
    return math.hypot((pred.cx - gt.cx) / gt.w, (pred.cy - gt.cy) / gt.h)


def area_ratio(gt: BoundingBox, dims: ImageDims) -> float:
    """Fraction of the image area covered by the box."""
    return gt.area / (dims.width * dims.height)


def parse_groundtruth_line(line: str) -> BoundingBox:
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise ValueError(f"expected 'x,y,w,h', got: {line!r}")
    x, y, w, h = (float(p) for p in parts)
    return BoundingBox(x, y, w, h)


def read_groundtruth(path: str | Path) -> list[BoundingBox]:
    """Read a LaSOT-style ground-truth file: one 'x,y,w,h' line per frame."""
    boxes = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                boxes.append(parse_groundtruth_line(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return boxes


def write_groundtruth(path: str | Path, boxes: Iterable[BoundingBox]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in boxes:
            fh.write(f"{b.x:g},{b.y:g},{b.w:g},{b.h:g}\n")
