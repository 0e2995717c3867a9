"""Axis-aligned boxes and overlap measures."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, slots=True)
class BBox:
    """Box in pixel coordinates, (x1, y1) top-left and (x2, y2) bottom-right.

    Area is ``(x2 - x1) * (y2 - y1)``; there is no +1 pixel convention.
    Zero- or negative-area boxes raise ``ValueError``.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"non-finite box coordinate {name}={value!r}")
            object.__setattr__(self, name, value)
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValueError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2}): "
                "need x2 > x1 and y2 > y1"
            )

    @classmethod
    def from_xywh(cls, left, top, width, height):
        if not (width > 0 and height > 0):
            raise ValueError(f"non-positive width/height ({width}, {height})")
        return cls(left, top, left + width, top + height)

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return self.width * self.height

    def as_array(self):
        return np.array([self.x1, self.y1, self.x2, self.y2])

    def scaled(self, s):
        return BBox(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 for disjoint (or merely touching) boxes."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_distance(a: BBox, b: BBox) -> float:
    """Jaccard distance ``1 - iou(a, b)``."""
    return 1.0 - iou(a, b)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an (n, 4) float array; always 2-D, even when empty."""
    out = np.empty((len(boxes), 4))
    for k, b in enumerate(boxes):
        out[k] = (b.x1, b.y1, b.x2, b.y2)
    return out


def array_to_boxes(arr) -> list[BBox]:
    return [BBox(*row) for row in np.asarray(arr, dtype=np.float64).reshape(-1, 4)]


def clip_to_image(box: BBox, width: float, height: float, min_size: float = 1.0) -> BBox:
    """Clip into ``[0, width] x [0, height]`` keeping at least ``min_size`` per side."""
    def _axis(lo, hi, limit):
        lo, hi = max(lo, 0.0), min(hi, limit)
        if hi - lo < min_size:
            centre = min(max(0.5 * (lo + hi), 0.5 * min_size), limit - 0.5 * min_size)
            lo, hi = centre - 0.5 * min_size, centre + 0.5 * min_size
        return lo, hi

    x1, x2 = _axis(box.x1, box.x2, width)
    y1, y2 = _axis(box.y1, box.y2, height)
    return BBox(x1, y1, x2, y2)
