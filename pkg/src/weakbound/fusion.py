"""Detector/boundary fusion: objectness maps and multiplicative combination."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .raster import DetectionBox


def objectness(detections: list[DetectionBox], width: int, height: int,
               floor: float = 0.0) -> np.ndarray:
    """Per-pixel maximum of covering detection scores; ``floor`` elsewhere."""
    if not 0.0 <= floor <= 1.0:
        raise ParameterError(f"floor {floor} outside [0,1]")
    out = np.full((height, width), floor, dtype=np.float64)
    for det in detections:
        r = det.rect.clip(width, height)
        if r is None:
            continue
        region = out[r.y0:r.y1, r.x0:r.x1]
        np.maximum(region, det.score, out=region)
    return out


def fuse(boundary: np.ndarray, obj: np.ndarray) -> np.ndarray:
    """Pixelwise product; boundaries outside confident detections fade out."""
    boundary = np.asarray(boundary, dtype=np.float64)
    obj = np.asarray(obj, dtype=np.float64)
    if boundary.shape != obj.shape:
        raise ParameterError(
            f"boundary {boundary.shape} and objectness {obj.shape} dims differ")
    return boundary * obj
