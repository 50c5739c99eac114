"""
Box geometry
============

Axis-aligned boxes in pixel space with exclusive far edges, plus the
operations every other stage is built on: IoU, clipping, translation
between window and frame coordinates, and greedy non-maximum suppression.

Coordinates are continuous; ``width == x2 - x1`` with no +1 correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

LABELS = ("drone", "bird")
TILE_SOURCES = tuple(f"tile{i}" for i in range(4))
SOURCES = ("full",) + TILE_SOURCES + ("interpolated",)


@dataclass(frozen=True, order=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate in {self!r}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"negative extent: {self!r}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> BoundingBox:
        if w < 0 or h < 0:
            raise ValueError(f"negative size w={w} h={h}")
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def to_xywh(self) -> tuple[float, float, float, float]:
        """Top-left plus size, chosen so that ``from_xywh`` reproduces the box exactly."""
        return (self.x1, self.y1, extent(self.x1, self.x2), extent(self.y1, self.y2))

    def translate(self, dx: float, dy: float) -> BoundingBox:
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def extent(lo: float, hi: float) -> float:
    """Return a size ``s`` with ``lo + s == hi`` in floating point, if one exists.

    ``hi - lo`` alone does not always survive ``lo + (hi - lo)``; a few ulps of
    search make the xywh form of a box round-trip bit-exactly.
    """
    s = hi - lo
    if lo + s == hi:
        return s
    up = down = s
    for _ in range(16):
        up = math.nextafter(up, math.inf)
        if lo + up == hi:
            return up
        down = math.nextafter(down, -math.inf)
        if down >= 0 and lo + down == hi:
            return down
    return s


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    label: str
    score: float
    frame: int = 0
    source: str = "full"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.frame < 0:
            raise ValueError(f"negative frame index {self.frame}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    def with_box(self, box: BoundingBox) -> Detection:
        return replace(self, box=box)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def clip(b: BoundingBox, width: float, height: float) -> BoundingBox:
    """Intersect ``b`` with ``[0, width] x [0, height]``.

    A disjoint box collapses to a zero-area box on the nearest edge.
    """
    if width <= 0 or height <= 0:
        raise ValueError("clip bounds must be positive")
    x1 = min(max(b.x1, 0.0), width)
    y1 = min(max(b.y1, 0.0), height)
    x2 = min(max(b.x2, 0.0), width)
    y2 = min(max(b.y2, 0.0), height)
    return BoundingBox(x1, y1, x2, y2)


def remap(d: Detection, tile_origin_x: float, tile_origin_y: float) -> Detection:
    """Express a window-local detection in frame coordinates."""
    return d.with_box(d.box.translate(tile_origin_x, tile_origin_y))


def nms(dets: Sequence[Detection], iou_threshold: float, class_aware: bool = True) -> list[Detection]:
    """Greedy NMS.

    Candidates are visited by descending score (stable, so ties keep input
    order); a candidate is kept iff its IoU with every kept detection of the
    same label (any label when ``class_aware`` is false) is below
    ``iou_threshold``. The result is in acceptance order.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept: list[Detection] = []
    for i in order:
        d = dets[i]
        if all(
            iou(d.box, k.box) < iou_threshold
            for k in kept
            if not class_aware or k.label == d.label
        ):
            kept.append(d)
    return kept


def canonical_order(dets: Iterable[Detection]) -> list[Detection]:
    """Frame, then score descending, then box lexicographic."""
    return sorted(dets, key=lambda d: (d.frame, -d.score, d.box.as_tuple(), d.label, d.source))
