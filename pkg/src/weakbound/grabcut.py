"""Figure-ground segmentation of a detection box via iterated graph cuts.

Color models are two K-component full-covariance GMMs (foreground and
background). Each iteration re-assigns components, refits the models and
solves a min-cut over the 8-connected grid; the total energy is recorded
per iteration so convergence can be asserted rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .maxflow import max_flow
from .raster import (IGNORE, NEGATIVE, POSITIVE, DetectionBox, Rect, iou,
                     mask_bounding_rect, new_tristate)
from .segment import mask_contour

_HARD_LINK = 1e9
_COV_REG = 1e-3


@dataclass
class GrabCutResult:
    mask: np.ndarray                      # uint8 (H, W), 1 = foreground
    energy_trace: list = field(default_factory=list)


class _Gmm:
    """K-component Gaussian mixture with regularized full covariances."""

    def __init__(self, k: int, dim: int = 3):
        self.k = k
        self.weights = np.zeros(k)
        self.means = np.zeros((k, dim))
        self.covs = np.tile(np.eye(dim), (k, 1, 1))
        self._prepare()

    def _prepare(self):
        self._inv = np.linalg.inv(self.covs)
        sign, logdet = np.linalg.slogdet(self.covs)
        self._log_norm = 0.5 * logdet + 0.5 * self.covs.shape[1] * np.log(2 * np.pi)

    def fit(self, pixels: np.ndarray, assign: np.ndarray):
        """Refit all components from hard assignments."""
        n = len(pixels)
        for c in range(self.k):
            sel = assign == c
            cnt = int(sel.sum())
            if cnt == 0:
                self.weights[c] = 0.0
                continue
            self.weights[c] = cnt / n
            pts = pixels[sel]
            self.means[c] = pts.mean(axis=0)
            d = pts - self.means[c]
            self.covs[c] = d.T @ d / cnt + _COV_REG * np.eye(pts.shape[1])
        self._prepare()

    def nll(self, pixels: np.ndarray) -> np.ndarray:
        """Per-(pixel, component) negative log likelihood incl. weight."""
        out = np.full((len(pixels), self.k), np.inf)
        for c in range(self.k):
            if self.weights[c] <= 0:
                continue
            d = pixels - self.means[c]
            maha = np.einsum("ij,jk,ik->i", d, self._inv[c], d)
            out[:, c] = 0.5 * maha + self._log_norm[c] - np.log(self.weights[c])
        return out


def _kmeans_assign(pixels: np.ndarray, k: int, rng: np.random.Generator,
                   iters: int = 10) -> np.ndarray:
    """Seeded Lloyd iterations; returns hard cluster labels."""
    n = len(pixels)
    centers = pixels[rng.choice(n, size=min(k, n), replace=False)].astype(np.float64)
    if len(centers) < k:
        centers = np.vstack([centers, centers[rng.integers(0, len(centers), k - len(centers))]])
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((pixels[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for c in range(k):
            sel = labels == c
            if sel.any():
                centers[c] = pixels[sel].mean(axis=0)
    return labels


def _pairwise_edges(img: np.ndarray, gamma: float):
    """8-neighbor edge list with contrast-sensitive Potts weights."""
    h, w = img.shape[:2]
    idx = np.arange(h * w).reshape(h, w)
    us, vs, d2s, dists = [], [], [], []
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        y1 = h - dy
        x0, x1 = max(0, -dx), w - max(0, dx)
        a = idx[0:y1, x0:x1].ravel()
        b = idx[dy:y1 + dy, x0 + dx:x1 + dx].ravel()
        diff = (img[0:y1, x0:x1].reshape(-1, img.shape[2]).astype(np.float64)
                - img[dy:y1 + dy, x0 + dx:x1 + dx].reshape(-1, img.shape[2]))
        us.append(a)
        vs.append(b)
        d2s.append((diff ** 2).sum(axis=1))
        dists.append(np.full(a.size, np.hypot(dy, dx)))
    u = np.concatenate(us)
    v = np.concatenate(vs)
    d2 = np.concatenate(d2s)
    dist = np.concatenate(dists)
    mean_d2 = d2.mean()
    beta = 0.0 if mean_d2 <= 0 else 1.0 / (2.0 * mean_d2)
    weight = gamma * np.exp(-beta * d2) / dist
    return u, v, weight, d2, beta


def grabcut(image: np.ndarray, rect: Rect, iters: int = 5, gamma: float = 50.0,
            k_components: int = 5, pad_frac: float = 0.5, seed: int = 0) -> GrabCutResult:
    """Segment the object inside ``rect``; foreground is confined to the rect.

    Runs on a crop padded by ``pad_frac`` of the box size. The energy trace
    holds the total (data + smoothness) energy after each iteration's cut.
    """
    if iters < 1:
        raise ParameterError("iters must be >= 1")
    h, w = image.shape[:2]
    inner = rect.clip(w, h)
    if inner is None:
        raise ParameterError(f"rect {rect} lies outside the {w}x{h} image")
    pad_x = int(round(pad_frac * inner.width))
    pad_y = int(round(pad_frac * inner.height))
    crop = Rect(inner.x0 - pad_x, inner.y0 - pad_y,
                inner.x1 + pad_x, inner.y1 + pad_y).clip(w, h)
    sub = image[crop.y0:crop.y1, crop.x0:crop.x1]
    ch, cw = sub.shape[:2]
    pixels = sub.reshape(-1, sub.shape[2]).astype(np.float64)

    in_rect = np.zeros((ch, cw), dtype=bool)
    in_rect[inner.y0 - crop.y0:inner.y1 - crop.y0,
            inner.x0 - crop.x0:inner.x1 - crop.x0] = True
    in_rect = in_rect.ravel()
    if not (~in_rect).any():
        # box covers the whole crop; no background statistics to learn
        full = np.zeros((h, w), dtype=np.uint8)
        full[inner.y0:inner.y1, inner.x0:inner.x1] = 1
        return GrabCutResult(full, [0.0])

    rng = np.random.default_rng(seed)
    fg_label = in_rect.copy()
    fg, bg = _Gmm(k_components), _Gmm(k_components)
    fg.fit(pixels[fg_label], _kmeans_assign(pixels[fg_label], k_components, rng))
    bg.fit(pixels[~fg_label], _kmeans_assign(pixels[~fg_label], k_components, rng))

    eu, ev, ew, _, _ = _pairwise_edges(sub, gamma)
    trace = []
    for _ in range(iters):
        # component re-assignment and model refit on current labels
        fg_nll_all = fg.nll(pixels)
        bg_nll_all = bg.nll(pixels)
        fg.fit(pixels[fg_label], fg_nll_all[fg_label].argmin(axis=1))
        bg.fit(pixels[~fg_label], bg_nll_all[~fg_label].argmin(axis=1))
        d_fg = fg.nll(pixels).min(axis=1)
        d_bg = bg.nll(pixels).min(axis=1)
        # per-pixel shift keeps capacities non-negative without moving the argmin
        shift = np.minimum(d_fg, d_bg)
        # hard background outside the detection rect
        sink_cap = np.where(in_rect, d_fg - shift, _HARD_LINK)
        source_cap = np.where(in_rect, d_bg - shift, 0.0)
        _, side = max_flow(ch * cw, eu, ev, ew, ew, source_cap, sink_cap)
        fg_label = np.asarray(side)
        data_e = np.where(fg_label, d_fg, d_bg).sum()
        smooth_e = ew[fg_label[eu] != fg_label[ev]].sum()
        trace.append(float(data_e + smooth_e))
        if not fg_label.any():
            break

    full = np.zeros((h, w), dtype=np.uint8)
    full[crop.y0:crop.y1, crop.x0:crop.x1] = fg_label.reshape(ch, cw).astype(np.uint8)
    return GrabCutResult(full, trace)


def grabcut_annotation(image: np.ndarray, detections: list[DetectionBox],
                       iou_accept: float = 0.7, iou_mode: str = "rect",
                       iters: int = 5, seed: int = 0, **kwargs) -> np.ndarray:
    """Tri-state annotation from per-box figure-ground segmentation.

    Accepted boxes (segment IoU >= ``iou_accept``) contribute their mask
    contour as Positive; rejected boxes are marked Ignore wholesale.
    """
    if iou_mode not in ("rect", "mask"):
        raise ParameterError(f"unknown iou_mode {iou_mode!r}")
    h, w = image.shape[:2]
    out = new_tristate(h, w, NEGATIVE)
    accepted_contours = []
    for i, det in enumerate(detections):
        clipped = det.rect.clip(w, h)
        if clipped is None:
            continue
        result = grabcut(image, clipped, iters=iters, seed=seed + i, **kwargs)
        seg_rect = mask_bounding_rect(result.mask)
        if iou_mode == "rect":
            score = iou(seg_rect, clipped) if seg_rect is not None else 0.0
        else:
            box_mask = np.zeros((h, w), dtype=bool)
            box_mask[clipped.y0:clipped.y1, clipped.x0:clipped.x1] = True
            inter = (result.mask.astype(bool) & box_mask).sum()
            union = (result.mask.astype(bool) | box_mask).sum()
            score = inter / union if union else 0.0
        if score >= iou_accept:
            accepted_contours.append(mask_contour(result.mask))
        else:
            out[clipped.y0:clipped.y1, clipped.x0:clipped.x1] = IGNORE
    for contour in accepted_contours:
        out[contour.astype(bool)] = POSITIVE
    return out
