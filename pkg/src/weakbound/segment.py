"""Graph-based greedy merge segmentation and boundary extraction.

Segments the smoothed image over a grid graph: edges sorted by color
distance, components merged while the joining edge is no heavier than
min(Int(C) + k/|C|) of both sides, then a minimum-size cleanup pass.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from numba import njit
from scipy.ndimage import gaussian_filter


@dataclass(frozen=True)
class FhParams:
    k: float = 300.0
    sigma: float = 0.8
    min_size: int = 100
    connectivity: int = 4  # 4 or 8

    def __post_init__(self):
        if self.k <= 0 or self.sigma < 0 or self.min_size < 1:
            raise ValueError(f"invalid params {self}")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SegmentLabeling:
    """Per-pixel region ids in [0, num_regions), row-major first-seen order."""

    labels: np.ndarray  # int32 (H, W)
    num_regions: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@njit(cache=True)
def _uf_find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:  # path compression
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def _merge_edges(order, ea, eb, ew, n, k, min_size):
    parent = np.arange(n, dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    thr = np.full(n, k, dtype=np.float64)
    for idx in order:
        a = _uf_find(parent, ea[idx])
        b = _uf_find(parent, eb[idx])
        if a == b:
            continue
        w = ew[idx]
        if w <= thr[a] and w <= thr[b]:
            if rank[a] < rank[b]:
                a, b = b, a
            parent[b] = a
            if rank[a] == rank[b]:
                rank[a] += 1
            size[a] += size[b]
            thr[a] = w + k / size[a]
    # small-region cleanup: absorb along the same edge ordering
    for idx in order:
        a = _uf_find(parent, ea[idx])
        b = _uf_find(parent, eb[idx])
        if a != b and (size[a] < min_size or size[b] < min_size):
            if rank[a] < rank[b]:
                a, b = b, a
            parent[b] = a
            if rank[a] == rank[b]:
                rank[a] += 1
            size[a] += size[b]
    roots = np.empty(n, dtype=np.int64)
    for i in range(n):
        roots[i] = _uf_find(parent, i)
    return roots


def _grid_edges(smooth: np.ndarray, connectivity: int):
    """Edge arrays (a, b, weight, direction) over the pixel grid."""
    h, w = smooth.shape[:2]
    idx = np.arange(h * w).reshape(h, w)
    pieces = []
    # direction codes keep the tie-break order stable and explicit
    offsets = [(0, 1, 0), (1, 0, 1)]
    if connectivity == 8:
        offsets += [(1, 1, 2), (1, -1, 3)]
    for dy, dx, code in offsets:
        y0, y1 = 0, h - dy
        x0, x1 = max(0, -dx), w - max(0, dx)
        a = idx[y0:y1, x0:x1]
        b = idx[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        diff = smooth[y0:y1, x0:x1] - smooth[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        wgt = np.sqrt((diff.astype(np.float64) ** 2).sum(axis=-1))
        pieces.append((a.ravel(), b.ravel(), wgt.ravel(),
                       np.full(a.size, code, dtype=np.int8),
                       (a // w).ravel(), (a % w).ravel()))
    ea = np.concatenate([p[0] for p in pieces])
    eb = np.concatenate([p[1] for p in pieces])
    ew = np.concatenate([p[2] for p in pieces])
    code = np.concatenate([p[3] for p in pieces])
    ey = np.concatenate([p[4] for p in pieces])
    ex = np.concatenate([p[5] for p in pieces])
    return ea, eb, ew, code, ey, ex


def fh_segment(image: np.ndarray, params: FhParams = FhParams()) -> SegmentLabeling:
    """Greedy graph merge segmentation of an RGB (or gray) image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    h, w = img.shape[:2]
    if params.sigma > 0:
        smooth = np.stack(
            [gaussian_filter(img[..., c], params.sigma) for c in range(img.shape[2])],
            axis=-1)
    else:
        smooth = img
    ea, eb, ew, code, ey, ex = _grid_edges(smooth, params.connectivity)
    # stable tie-break: weight, then y, x, direction of the edge origin
    order = np.lexsort((code, ex, ey, ew))
    roots = _merge_edges(order, ea.astype(np.int64), eb.astype(np.int64),
                         ew, h * w, params.k, params.min_size)
    uniq, inverse = np.unique(roots, return_inverse=True)
    # renumber in row-major first-occurrence order for reproducibility
    first_idx = np.full(uniq.size, h * w, dtype=np.int64)
    np.minimum.at(first_idx, inverse, np.arange(h * w))
    remap = np.empty(uniq.size, dtype=np.int64)
    remap[np.argsort(first_idx, kind="stable")] = np.arange(uniq.size)
    return SegmentLabeling(remap[inverse].reshape(h, w).astype(np.int32), int(uniq.size))


def mask_contour(mask: np.ndarray) -> np.ndarray:
    """Inner contour: mask pixels with a 4-neighbor outside the mask."""
    m = np.asarray(mask).astype(bool)
    interior = np.zeros_like(m)
    interior[1:-1, 1:-1] = (m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1]
                            & m[1:-1, :-2] & m[1:-1, 2:])
    return (m & ~interior).astype(np.uint8)


def labeling_boundaries(seg: SegmentLabeling | np.ndarray) -> np.ndarray:
    """Binary map: 1 where the right or bottom neighbor has a different label."""
    labels = seg.labels if isinstance(seg, SegmentLabeling) else np.asarray(seg)
    out = np.zeros(labels.shape, dtype=np.uint8)
    out[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    out[:-1, :] |= labels[:-1, :] != labels[1:, :]
    return out
