"""Core raster/geometry types: rectangles, detections, tri-state masks.

Images are carried as numpy arrays throughout the package:
  - RGB images: uint8, shape (H, W, 3)
  - gray images / binary maps: uint8 or float, shape (H, W)
  - probability maps: float64 in [0, 1], shape (H, W)
  - label maps: int32, shape (H, W)

Box coordinates are half-open pixel intervals [x0, x1) x [y0, y1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tri-state mask encoding (also the on-disk 8-bit encoding).
NEGATIVE = 0
IGNORE = 128
POSITIVE = 255


@dataclass(frozen=True)
class Rect:
    """Axis-aligned box over the half-open pixel grid [x0,x1) x [y0,y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"degenerate rect {self!r}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def clip(self, width: int, height: int) -> "Rect | None":
        """Clip to image bounds; None if nothing remains."""
        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return Rect(x0, y0, x1, y1)

    def dilate(self, margin: int) -> "Rect":
        return Rect(self.x0 - margin, self.y0 - margin,
                    self.x1 + margin, self.y1 + margin)


@dataclass(frozen=True)
class DetectionBox:
    """One detector output: category, confidence and box."""

    class_id: int
    score: float
    rect: Rect

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0,1]")
        if self.class_id < 0:
            raise ValueError(f"negative class id {self.class_id}")


def iou(a: Rect, b: Rect) -> float:
    """Intersection-over-union of two rects on continuous pixel areas."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def mask_bounding_rect(mask: np.ndarray) -> Rect | None:
    """Tight bounding rect of the nonzero pixels, None when empty."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    return Rect(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def new_tristate(height: int, width: int, fill: int = NEGATIVE) -> np.ndarray:
    """Fresh tri-state mask, uint8 with the 0/128/255 encoding."""
    return np.full((height, width), fill, dtype=np.uint8)


def check_tristate(mask: np.ndarray) -> np.ndarray:
    """Validate the 0/128/255 encoding; returns the mask unchanged."""
    bad = ~np.isin(mask, (NEGATIVE, IGNORE, POSITIVE))
    if bad.any():
        raise ValueError(f"{int(bad.sum())} pixels outside the tri-state encoding")
    return mask


def filter_detections(dets, score_min: float = 0.8):
    """Keep detections with confidence strictly above ``score_min``."""
    return [d for d in dets if d.score > score_min]
