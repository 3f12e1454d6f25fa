"""Object proposals by hierarchical region merging, plus boundary consensus.

Proposals grow from a base segmentation by greedily merging the most
similar adjacent regions (color, texture, size and fill cues); every
merge step emits a proposal, so n base regions yield 2n-1 proposals
before deduplication.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .raster import (IGNORE, NEGATIVE, POSITIVE, DetectionBox, Rect, iou,
                     mask_bounding_rect, new_tristate)
from .segment import SegmentLabeling, mask_contour

_COLOR_BINS = 25
_TEX_ORIENTS = 8
_TEX_BINS = 10


@dataclass(frozen=True)
class SimilarityWeights:
    w_color: float = 1.0
    w_texture: float = 1.0
    w_size: float = 1.0
    w_fill: float = 1.0

    def __post_init__(self):
        ws = (self.w_color, self.w_texture, self.w_size, self.w_fill)
        if any(w < 0 for w in ws) or not any(w > 0 for w in ws):
            raise ValueError("weights must be non-negative with at least one positive")


@dataclass
class Proposal:
    mask: np.ndarray          # bool (H, W)
    rect: Rect
    source: str

    def mask_hash(self) -> bytes:
        """64-bit digest of the pixel set, used for exact deduplication."""
        return hashlib.blake2b(np.packbits(self.mask).tobytes(), digest_size=8).digest()


def _color_histograms(image: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[..., None]
    bins = np.clip((img.astype(np.int64) * _COLOR_BINS) // 256, 0, _COLOR_BINS - 1)
    hist = np.zeros((n, img.shape[2] * _COLOR_BINS))
    flat_labels = labels.ravel()
    for c in range(img.shape[2]):
        np.add.at(hist, (flat_labels, c * _COLOR_BINS + bins[..., c].ravel()), 1.0)
    return hist / np.maximum(hist.sum(axis=1, keepdims=True), 1e-12)


def _texture_histograms(image: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    flat_labels = labels.ravel()
    hist = np.zeros((n, img.shape[2] * _TEX_ORIENTS * _TEX_BINS))
    for c in range(img.shape[2]):
        gy = ndimage.gaussian_filter1d(img[..., c], 1.0, axis=0, order=1)
        gx = ndimage.gaussian_filter1d(img[..., c], 1.0, axis=1, order=1)
        orient = (np.arctan2(gy, gx) % np.pi) / np.pi * _TEX_ORIENTS
        obin = np.clip(orient.astype(np.int64), 0, _TEX_ORIENTS - 1)
        mag = np.hypot(gx, gy)
        mbin = np.clip((mag / max(mag.max(), 1e-12) * _TEX_BINS).astype(np.int64),
                       0, _TEX_BINS - 1)
        col = c * _TEX_ORIENTS * _TEX_BINS + obin.ravel() * _TEX_BINS + mbin.ravel()
        np.add.at(hist, (flat_labels, col), 1.0)
    return hist / np.maximum(hist.sum(axis=1, keepdims=True), 1e-12)


def _region_adjacency(labels: np.ndarray) -> set[tuple[int, int]]:
    pairs = set()
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        diff = a != b
        lo = np.minimum(a[diff], b[diff])
        hi = np.maximum(a[diff], b[diff])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return pairs


class _RegionSet:
    """Merge bookkeeping: histograms, sizes, bounding rects, adjacency."""

    def __init__(self, image, base: SegmentLabeling, weights: SimilarityWeights):
        n = base.num_regions
        self.weights = weights
        self.image_area = base.labels.size
        self.color = _color_histograms(image, base.labels, n)
        self.texture = _texture_histograms(image, base.labels, n)
        self.size = np.bincount(base.labels.ravel(), minlength=n).astype(np.float64)
        self.rects: list[Rect] = []
        for r in range(n):
            self.rects.append(mask_bounding_rect(base.labels == r))
        self.neighbors: dict[int, set[int]] = {r: set() for r in range(n)}
        for a, b in _region_adjacency(base.labels):
            self.neighbors[int(a)].add(int(b))
            self.neighbors[int(b)].add(int(a))
        self.members: dict[int, list[int]] = {r: [r] for r in range(n)}

    def similarity(self, i: int, j: int) -> float:
        w = self.weights
        s = 0.0
        if w.w_color:
            s += w.w_color * np.minimum(self.color[i], self.color[j]).sum()
        if w.w_texture:
            s += w.w_texture * np.minimum(self.texture[i], self.texture[j]).sum()
        if w.w_size:
            s += w.w_size * (1.0 - (self.size[i] + self.size[j]) / self.image_area)
        if w.w_fill:
            union = Rect(min(self.rects[i].x0, self.rects[j].x0),
                         min(self.rects[i].y0, self.rects[j].y0),
                         max(self.rects[i].x1, self.rects[j].x1),
                         max(self.rects[i].y1, self.rects[j].y1))
            s += w.w_fill * (1.0 - (union.area - self.size[i] - self.size[j])
                             / self.image_area)
        return s

    def merge(self, i: int, j: int, new_id: int):
        si, sj = self.size[i], self.size[j]
        tot = si + sj
        self.color = np.vstack([self.color, (self.color[i] * si + self.color[j] * sj) / tot])
        self.texture = np.vstack([self.texture,
                                  (self.texture[i] * si + self.texture[j] * sj) / tot])
        self.size = np.append(self.size, tot)
        self.rects.append(Rect(min(self.rects[i].x0, self.rects[j].x0),
                               min(self.rects[i].y0, self.rects[j].y0),
                               max(self.rects[i].x1, self.rects[j].x1),
                               max(self.rects[i].y1, self.rects[j].y1)))
        self.members[new_id] = self.members.pop(i) + self.members.pop(j)
        merged = (self.neighbors.pop(i) | self.neighbors.pop(j)) - {i, j}
        self.neighbors[new_id] = merged
        for k in merged:
            self.neighbors[k] -= {i, j}
            self.neighbors[k].add(new_id)


def selective_search(image: np.ndarray, base: SegmentLabeling,
                     weights: SimilarityWeights = SimilarityWeights(),
                     max_proposals: int = 1000) -> list[Proposal]:
    """Hierarchical merge proposals over a base segmentation."""
    if base.labels.shape != np.asarray(image).shape[:2]:
        raise ParameterError("base segmentation dims differ from image dims")
    regions = _RegionSet(image, base, weights)
    n = base.num_regions

    def materialize(rid: int, tag: str) -> Proposal:
        mask = np.isin(base.labels, regions.members[rid])
        return Proposal(mask, regions.rects[rid], tag)

    proposals = [materialize(r, "leaf") for r in range(n)]
    heap = []
    for i in sorted(regions.neighbors):
        for j in sorted(regions.neighbors[i]):
            if i < j:
                heapq.heappush(heap, (-regions.similarity(i, j), i, j))
    alive = set(range(n))
    next_id = n
    while heap:
        neg_sim, i, j = heapq.heappop(heap)
        if i not in alive or j not in alive or j not in regions.neighbors[i]:
            continue
        regions.merge(i, j, next_id)
        alive -= {i, j}
        alive.add(next_id)
        proposals.append(materialize(next_id, "merge"))
        for k in sorted(regions.neighbors[next_id]):
            heapq.heappush(heap, (-regions.similarity(min(k, next_id), max(k, next_id)),
                                  min(k, next_id), max(k, next_id)))
        next_id += 1

    seen, unique = set(), []
    for p in proposals:
        h = p.mask_hash()
        if h not in seen:
            seen.add(h)
            unique.append(p)
    return unique[:max_proposals]


def match_proposals(proposals: list[Proposal], detections: list[DetectionBox],
                    iou_min: float = 0.9) -> dict[int, list[Proposal]]:
    """Map detection index -> proposals whose rect overlaps by at least iou_min."""
    out: dict[int, list[Proposal]] = {}
    for d, det in enumerate(detections):
        out[d] = [p for p in proposals if iou(p.rect, det.rect) >= iou_min]
    return out


def union_boundaries(matched: list[Proposal]) -> np.ndarray:
    """Pixelwise OR of the proposals' mask contours (not clipped to any box)."""
    if not matched:
        raise ParameterError("union_boundaries needs at least one proposal")
    out = np.zeros(matched[0].mask.shape, dtype=np.uint8)
    for p in matched:
        out |= mask_contour(p.mask)
    return out


def consensus_boundaries(maps: list[np.ndarray], agreement: float = 0.7,
                         tol: int = 1) -> np.ndarray:
    """Tri-state consensus over boundary maps with spatial tolerance.

    A pixel positive in at least one map becomes Positive when the fraction
    of maps having a positive within Chebyshev distance tol exceeds
    ``agreement``; lower but nonzero support becomes Ignore.
    """
    if not maps:
        raise ParameterError("consensus needs at least one map")
    shape = np.asarray(maps[0]).shape
    if any(np.asarray(m).shape != shape for m in maps):
        raise ParameterError("consensus maps must share dimensions")
    union = np.zeros(shape, dtype=bool)
    support = np.zeros(shape, dtype=np.int64)
    size = 2 * tol + 1
    for m in maps:
        m = np.asarray(m) > 0
        union |= m
        near = ndimage.maximum_filter(m, size=size) if tol > 0 else m
        support += near
    frac = support / len(maps)
    out = new_tristate(*shape)
    out[union & (frac > agreement)] = POSITIVE
    out[union & (frac <= agreement)] = IGNORE
    return out


def save_proposals(records, path) -> None:
    """JSONL export: {"image", "rect", "mask_rle"} with row-wise run lengths."""
    with open(path, "w") as f:
        for image_id, prop in records:
            r = prop.rect
            f.write(json.dumps({
                "image": image_id,
                "rect": [r.x0, r.y0, r.x1, r.y1],
                "shape": list(prop.mask.shape),
                "mask_rle": _rle_encode(prop.mask),
            }) + "\n")


def load_proposals(path) -> list[tuple[str, Proposal]]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            h, w = obj["shape"]
            mask = _rle_decode(obj["mask_rle"], h, w)
            x0, y0, x1, y1 = obj["rect"]
            out.append((obj["image"], Proposal(mask, Rect(x0, y0, x1, y1), "imported")))
    return out


def _rle_encode(mask: np.ndarray) -> list[int]:
    """Run lengths of the row-major flattened mask, starting with a 0-run."""
    flat = np.asarray(mask, dtype=np.uint8).ravel()
    changes = np.flatnonzero(np.diff(flat)) + 1
    runs = np.diff(np.concatenate([[0], changes, [flat.size]]))
    if flat.size and flat[0] == 1:
        return [0] + runs.tolist()
    return runs.tolist()


def _rle_decode(runs: list[int], h: int, w: int) -> np.ndarray:
    flat = np.zeros(h * w, dtype=bool)
    pos, val = 0, False
    for run in runs:
        if val:
            flat[pos:pos + run] = True
        pos += run
        val = not val
    return flat.reshape(h, w)
