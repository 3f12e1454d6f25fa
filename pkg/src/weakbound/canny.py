"""Classic gradient-based edge detector with hysteresis linking."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ParameterError

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def _sobel(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = ndimage.convolve(img, _SOBEL_X, mode="nearest")
    gy = ndimage.convolve(img, _SOBEL_Y, mode="nearest")
    return gx, gy


def _directional_nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that dominate both neighbors along the quantized gradient."""
    h, w = mag.shape
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # quantize to 4 directions: 0, 45, 90, 135 degrees
    q = np.zeros((h, w), dtype=np.int8)
    q[(angle >= 22.5) & (angle < 67.5)] = 1
    q[(angle >= 67.5) & (angle < 112.5)] = 2
    q[(angle >= 112.5) & (angle < 157.5)] = 3
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    padded = np.pad(mag, 1)
    keep = np.zeros((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    for d, (dy, dx) in offsets.items():
        sel = q == d
        fwd = padded[yy[sel] + 1 + dy, xx[sel] + 1 + dx]
        bwd = padded[yy[sel] + 1 - dy, xx[sel] + 1 - dx]
        keep[sel] = (mag[sel] > bwd) & (mag[sel] >= fwd)
    return np.where(keep, mag, 0.0)


def hysteresis(mag: np.ndarray, low: float, high: float) -> np.ndarray:
    """Binary edges: weak pixels survive only in components touching a strong one."""
    if low > high:
        raise ParameterError(f"low {low} > high {high}")
    weak = mag >= low
    strong = mag >= high
    labels, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n == 0:
        return np.zeros(mag.shape, dtype=np.uint8)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels].astype(np.uint8)


def canny(image: np.ndarray, sigma: float = 1.0,
          low: float = 0.1, high: float = 0.2) -> np.ndarray:
    """Edge map in {0,1}: smooth, Sobel, directional NMS, hysteresis."""
    if low > high:
        raise ParameterError(f"low {low} > high {high}")
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=2)
    if img.max() > 1.0:
        img = img / 255.0
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma)
    gx, gy = _sobel(img)
    mag = np.hypot(gx, gy)
    thin = _directional_nms(mag, gx, gy)
    return hysteresis(thin, low, high)
