"""Per-pixel feature channels and the cell bases the forest indexes into.

13 channels: 3 opponent color channels, gradient magnitude at two
smoothing scales, and 8 orientation-binned gradient magnitude channels.
Split features are cell averages of these channels (4x4 cells over the
32x32 input patch) and pairwise differences of coarser 6x6 cells, so two
box-filtered stacks are precomputed once per image and indexed directly
by both training and prediction.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

N_CHANNELS = 13
PATCH = 32          # input patch side
OUT = 16            # output patch side
RAW_GRID = 8        # 8x8 cells of 4px over the input patch
CELL_GRID = 5       # 5x5 cells of 6px (1px margin) for pairwise features
N_RAW = N_CHANNELS * RAW_GRID * RAW_GRID
_pairs = [(i, j) for i in range(CELL_GRID * CELL_GRID)
          for j in range(i + 1, CELL_GRID * CELL_GRID)]
PAIR_A = np.array([p[0] for p in _pairs], dtype=np.int64)
PAIR_B = np.array([p[1] for p in _pairs], dtype=np.int64)
N_PAIRS_PER_CH = len(_pairs)
N_FEATURES = N_RAW + N_CHANNELS * N_PAIRS_PER_CH


def compute_channels(image: np.ndarray) -> np.ndarray:
    """Deterministic (13, H, W) float32 channel stack."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    if img.max() > 1.0:
        img = img / 255.0
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    # opponent color space, all in [0, 1]
    o1 = (r + g + b) / 3.0
    o2 = (r - g) / 2.0 + 0.5
    o3 = (r + g - 2.0 * b) / 4.0 + 0.5
    chans = [o1, o2, o3]

    def grad(sigma):
        sm = ndimage.gaussian_filter(o1, sigma) if sigma > 0 else o1
        gy, gx = np.gradient(sm)
        return gx, gy, np.hypot(gx, gy)

    gx1, gy1, mag1 = grad(1.0)
    _, _, mag2 = grad(2.0)
    chans += [mag1, mag2]
    orient = np.arctan2(gy1, gx1) % np.pi
    obin = np.clip((orient / np.pi * 8).astype(np.int64), 0, 7)
    for o in range(8):
        chans.append(np.where(obin == o, mag1, 0.0))
    return np.stack(chans).astype(np.float32)


def channel_bases(channels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Box-filtered stacks (U4, U6) both code paths index into.

    U4[c, i, j] is the mean of channel c over the 4x4 block whose top-left
    corner is (i-2, j-2); U6 likewise for 6x6 blocks at (i-3, j-3).
    """
    u4 = np.stack([ndimage.uniform_filter(c, size=4, mode="nearest")
                   for c in channels]).astype(np.float32)
    u6 = np.stack([ndimage.uniform_filter(c, size=6, mode="nearest")
                   for c in channels]).astype(np.float32)
    return u4, u6


def patch_bases(u4: np.ndarray, u6: np.ndarray, centers_y: np.ndarray,
                centers_x: np.ndarray) -> np.ndarray:
    """Per-sample flat feature basis: 8x8 raw cells then 5x5 coarse cells.

    Returns (n, 13*64 + 13*25 + 1) float32; the trailing zero column lets
    every split feature be expressed as X[:, a] - X[:, b].
    """
    py = centers_y - PATCH // 2
    px = centers_x - PATCH // 2
    n = len(py)
    raw_y = py[:, None] + 2 + 4 * np.arange(RAW_GRID)
    raw_x = px[:, None] + 2 + 4 * np.arange(RAW_GRID)
    raw = u4[:, raw_y[:, :, None], raw_x[:, None, :]]          # (13, n, 8, 8)
    cell_y = py[:, None] + 4 + 6 * np.arange(CELL_GRID)
    cell_x = px[:, None] + 4 + 6 * np.arange(CELL_GRID)
    cells = u6[:, cell_y[:, :, None], cell_x[:, None, :]]      # (13, n, 5, 5)
    raw_flat = raw.transpose(1, 0, 2, 3).reshape(n, -1)
    cell_flat = cells.transpose(1, 0, 2, 3).reshape(n, -1)
    return np.hstack([raw_flat, cell_flat,
                      np.zeros((n, 1), dtype=np.float32)]).astype(np.float32)


def feature_columns() -> tuple[np.ndarray, np.ndarray]:
    """(a, b) basis-column indices so feature f = X[:, a[f]] - X[:, b[f]]."""
    zero_col = N_RAW + N_CHANNELS * CELL_GRID * CELL_GRID
    a = np.empty(N_FEATURES, dtype=np.int64)
    b = np.empty(N_FEATURES, dtype=np.int64)
    a[:N_RAW] = np.arange(N_RAW)
    b[:N_RAW] = zero_col
    for c in range(N_CHANNELS):
        lo = N_RAW + c * N_PAIRS_PER_CH
        a[lo:lo + N_PAIRS_PER_CH] = N_RAW + c * 25 + PAIR_A
        b[lo:lo + N_PAIRS_PER_CH] = N_RAW + c * 25 + PAIR_B
    return a, b
