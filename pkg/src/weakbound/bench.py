"""Boundary benchmark: NMS thinning, tolerance matching, PR aggregation.

Matching follows the multi-annotator convention: candidates are matched
one-to-one against every ground-truth map independently; recall counts
matched GT pixels per map, precision counts candidates matched in any map.
The matcher is maximum-cardinality augmenting-path matching on the
distance-thresholded bipartite graph (counts only depend on cardinality).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from .errors import ParameterError


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    sum_r_tp: int = 0
    sum_r_total: int = 0

    def __iadd__(self, other):
        self.tp += other.tp
        self.fp += other.fp
        self.sum_r_tp += other.sum_r_tp
        self.sum_r_total += other.sum_r_total
        return self

    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    def recall(self) -> float:
        return self.sum_r_tp / self.sum_r_total if self.sum_r_total else 0.0

    def fscore(self) -> float:
        p, r = self.precision(), self.recall()
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class PrSummary:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    fscore: np.ndarray
    ods_f: float
    ods_threshold: float
    ois_f: float
    ap: float
    image_counts: np.ndarray = field(default=None, repr=False)  # (n_img, n_thr, 4)


def _bilinear(img: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    h, w = img.shape
    y = np.clip(y, 0, h - 1.0)
    x = np.clip(x, 0, w - 1.0)
    y0 = np.floor(y).astype(np.int64)
    x0 = np.floor(x).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = y - y0
    fx = x - x0
    return (img[y0, x0] * (1 - fy) * (1 - fx) + img[y0, x1] * (1 - fy) * fx
            + img[y1, x0] * fy * (1 - fx) + img[y1, x1] * fy * fx)


def nms_thin(prob: np.ndarray) -> np.ndarray:
    """Suppress pixels not maximal perpendicular to the local edge direction.

    Orientation comes from the smoothed second-moment matrix of the map.
    The comparison is strict on one side only, so constant ridges keep a
    single-pixel line. Output never exceeds the input.
    """
    e = np.asarray(prob, dtype=np.float64)
    if e.ndim != 2:
        raise ParameterError("nms_thin expects a single-channel map")
    if not e.any():
        return e.copy()
    es = ndimage.gaussian_filter(e, 1.0)
    gy, gx = np.gradient(es)
    jxx = ndimage.gaussian_filter(gx * gx, 2.0)
    jxy = ndimage.gaussian_filter(gx * gy, 2.0)
    jyy = ndimage.gaussian_filter(gy * gy, 2.0)
    theta = 0.5 * np.arctan2(2 * jxy, jxx - jyy)  # dominant gradient direction
    dx = np.cos(theta)
    dy = np.sin(theta)
    # consistent sign so the strict/non-strict asymmetry is well defined
    flip = (dx < 0) | ((dx == 0) & (dy < 0))
    dx = np.where(flip, -dx, dx)
    dy = np.where(flip, -dy, dy)
    yy, xx = np.mgrid[0:e.shape[0], 0:e.shape[1]].astype(np.float64)
    fwd = _bilinear(e, yy + dy, xx + dx)
    bwd = _bilinear(e, yy - dy, xx - dx)
    keep = (e > bwd) & (e >= fwd)
    return np.where(keep, e, 0.0)


@njit(cache=True)
def _max_matching(adj_start, adj, nc, ng):
    """Kuhn's augmenting paths; returns (match_c, match_g), -1 for unmatched."""
    match_c = np.full(nc, -1, dtype=np.int64)
    match_g = np.full(ng, -1, dtype=np.int64)
    # greedy initialization
    for c in range(nc):
        for k in range(adj_start[c], adj_start[c + 1]):
            g = adj[k]
            if match_g[g] < 0:
                match_g[g] = c
                match_c[c] = g
                break
    used = np.full(ng, -1, dtype=np.int64)
    sc = np.empty(nc + 1, dtype=np.int64)   # candidate node per DFS level
    sg = np.empty(nc + 1, dtype=np.int64)   # edge taken to descend
    sk = np.empty(nc + 1, dtype=np.int64)   # adjacency cursor per level
    for c0 in range(nc):
        if match_c[c0] >= 0:
            continue
        stamp = c0
        top = 0
        sc[0] = c0
        sk[0] = adj_start[c0]
        while top >= 0:
            c = sc[top]
            k = sk[top]
            descended = False
            augmented = False
            while k < adj_start[c + 1]:
                g = adj[k]
                k += 1
                if used[g] == stamp:
                    continue
                used[g] = stamp
                if match_g[g] < 0:
                    # augment along the stored path
                    sg[top] = g
                    for i in range(top, -1, -1):
                        match_g[sg[i]] = sc[i]
                        match_c[sc[i]] = sg[i]
                    augmented = True
                    break
                sg[top] = g
                sk[top] = k
                top += 1
                sc[top] = match_g[g]
                sk[top] = adj_start[match_g[g]]
                descended = True
                break
            if augmented:
                break
            if not descended:
                top -= 1
    return match_c, match_g


def _disk_offsets(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    offs = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
            if dy * dy + dx * dx <= radius * radius]
    offs.sort(key=lambda o: (o[0] ** 2 + o[1] ** 2, o[0], o[1]))
    return np.array(offs, dtype=np.int64).reshape(-1, 2)


def _match_one(cand_ys, cand_xs, gt: np.ndarray, offsets: np.ndarray):
    """Match candidates against one GT map; returns (match_c, n_gt_matched, n_gt)."""
    h, w = gt.shape
    gys, gxs = np.nonzero(gt)
    ng = gys.size
    nc = cand_ys.size
    if nc == 0 or ng == 0:
        return np.full(nc, -1, dtype=np.int64), 0, int(ng)
    gidx = np.full((h, w), -1, dtype=np.int64)
    gidx[gys, gxs] = np.arange(ng)
    cand_idx_parts, gt_idx_parts = [], []
    for dy, dx in offsets:
        ny = cand_ys + dy
        nx = cand_xs + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        gi = gidx[ny[ok], nx[ok]]
        hit = gi >= 0
        cand_idx_parts.append(np.flatnonzero(ok)[hit])
        gt_idx_parts.append(gi[hit])
    ci = np.concatenate(cand_idx_parts)
    gi = np.concatenate(gt_idx_parts)
    order = np.argsort(ci, kind="stable")  # keeps near-first edge order per candidate
    ci, gi = ci[order], gi[order]
    counts = np.bincount(ci, minlength=nc)
    adj_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    match_c, match_g = _max_matching(adj_start, gi.astype(np.int64), nc, ng)
    return match_c, int((match_g >= 0).sum()), int(ng)


def correspond(cand: np.ndarray, gts: list[np.ndarray], max_dist: float) -> MatchCounts:
    """Tolerance-based correspondence counts of a binary candidate map."""
    cand = np.asarray(cand) > 0
    if not 0.0 < max_dist < 1.0:
        raise ParameterError(f"max_dist {max_dist} outside (0,1)")
    h, w = cand.shape
    for g in gts:
        if np.asarray(g).shape != (h, w):
            raise ParameterError("GT dims differ from candidate dims")
    radius = max_dist * float(np.hypot(h, w))
    offsets = _disk_offsets(radius)
    cys, cxs = np.nonzero(cand)
    nc = cys.size
    matched_any = np.zeros(nc, dtype=bool)
    counts = MatchCounts()
    for g in gts:
        match_c, n_gt_matched, ng = _match_one(cys, cxs, np.asarray(g) > 0, offsets)
        matched_any |= match_c >= 0
        counts.sum_r_tp += n_gt_matched
        counts.sum_r_total += ng
    counts.tp = int(matched_any.sum())
    counts.fp = nc - counts.tp
    return counts


def _fmeasure(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def pr_curve(preds: list[np.ndarray], gts: list[list[np.ndarray]],
             n_thresh: int = 99, max_dist: float = 0.01) -> PrSummary:
    """Dataset PR curve with ODS/OIS/AP over uniform thresholds."""
    if len(preds) != len(gts) or not preds:
        raise ParameterError("need one GT list per prediction")
    thresholds = np.arange(1, n_thresh + 1) / (n_thresh + 1)
    image_counts = np.zeros((len(preds), n_thresh, 4), dtype=np.int64)
    for i, (prob, gt_maps) in enumerate(zip(preds, gts)):
        # thin the soft map once so the kept line follows the ridge peak;
        # thinning after binarization would keep the edge of flat plateaus
        thin = nms_thin(np.asarray(prob, dtype=np.float64))
        # thresholds are relative to the map's own maximum, so scaling a map
        # by any positive constant leaves every binarization unchanged
        vmax = float(thin.max()) if thin.size else 0.0
        prev_key, prev = None, None
        for k, t in enumerate(thresholds):
            binar = (thin >= t * vmax) if vmax > 0 else np.zeros_like(thin, bool)
            key = int(binar.sum())
            if prev_key is not None and key == prev_key:
                image_counts[i, k] = prev  # identical binarization, reuse
                continue
            c = correspond(binar, gt_maps, max_dist)
            image_counts[i, k] = (c.tp, c.fp, c.sum_r_tp, c.sum_r_total)
            prev_key, prev = key, image_counts[i, k].copy()
    return summarize_counts(thresholds, image_counts)


def summarize_counts(thresholds: np.ndarray, image_counts: np.ndarray) -> PrSummary:
    """ODS/OIS/AP aggregation from per-(image, threshold) match counts."""
    agg = image_counts.sum(axis=0).astype(np.float64)  # (n_thr, 4)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(agg[:, 0] + agg[:, 1] > 0,
                             agg[:, 0] / np.maximum(agg[:, 0] + agg[:, 1], 1), 0.0)
        recall = np.where(agg[:, 3] > 0, agg[:, 2] / np.maximum(agg[:, 3], 1), 0.0)
    fs = np.array([_fmeasure(p, r) for p, r in zip(precision, recall)])
    ods_k = int(np.argmax(fs))
    # OIS: per-image best-F threshold, counts re-aggregated
    ois_counts = np.zeros(4, dtype=np.float64)
    for i in range(image_counts.shape[0]):
        best_k, best_f = 0, -1.0
        for k in range(image_counts.shape[1]):
            tp, fp, rtp, rtot = image_counts[i, k]
            p = tp / (tp + fp) if tp + fp else 0.0
            r = rtp / rtot if rtot else 0.0
            f = _fmeasure(p, r)
            if f > best_f:
                best_k, best_f = k, f
        ois_counts += image_counts[i, best_k]
    ois_p = ois_counts[0] / (ois_counts[0] + ois_counts[1]) if ois_counts[0] + ois_counts[1] else 0.0
    ois_r = ois_counts[2] / ois_counts[3] if ois_counts[3] else 0.0
    # AP: precision envelope sampled at 100 recall points
    rs = np.arange(1, 101) / 100.0
    ap = 0.0
    for r in rs:
        sel = recall >= r
        ap += precision[sel].max() if sel.any() else 0.0
    ap /= len(rs)
    return PrSummary(thresholds, precision, recall, fs,
                     ods_f=float(fs[ods_k]), ods_threshold=float(thresholds[ods_k]),
                     ois_f=_fmeasure(ois_p, ois_r), ap=float(ap),
                     image_counts=image_counts)


def class_boundaries(instance_labels: np.ndarray) -> np.ndarray:
    """External boundary of the union of a class's instances.

    Internal contours between touching or nested instances vanish in the
    union, implementing the internal-boundary zeroing of the per-class
    protocol.
    """
    from .segment import mask_contour

    return mask_contour(np.asarray(instance_labels) > 0)


def sbd_eval(preds_by_class: dict[int, list[np.ndarray]],
             gts_by_class: dict[int, list[np.ndarray]],
             max_dist: float = 0.02, n_thresh: int = 99) -> dict:
    """Per-class boundary evaluation against external instance contours."""
    per_class = {}
    fs, aps = [], []
    for cls in sorted(gts_by_class):
        gt_maps = [class_boundaries(m) for m in gts_by_class[cls]]
        if not any(m.any() for m in gt_maps):
            per_class[cls] = {"present": False}
            continue
        preds = preds_by_class.get(cls)
        if preds is None:
            raise ParameterError(f"no predictions for class {cls}")
        summary = pr_curve(preds, [[g] for g in gt_maps], n_thresh, max_dist)
        per_class[cls] = {"present": True, "ods_f": summary.ods_f,
                          "ois_f": summary.ois_f, "ap": summary.ap}
        fs.append(summary.ods_f)
        aps.append(summary.ap)
    return {"per_class": per_class,
            "mean_f": float(np.mean(fs)) if fs else 0.0,
            "mean_ap": float(np.mean(aps)) if aps else 0.0}
