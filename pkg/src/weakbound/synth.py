"""Synthetic shapes dataset: images, instance masks, perfect detections.

Stand-in for a detection-annotated corpus at desk scale. Ground-truth
boundary maps are reduced to an NMS-stable fixpoint so that a perfect
prediction survives the benchmark's thinning step unchanged. Annotation
corruption (boundary jitter, dropped contours, spurious contours) feeds
the noise-robustness experiments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from .bench import nms_thin
from .imageio import save_detections, save_image
from .raster import NEGATIVE, POSITIVE, DetectionBox, Rect, mask_bounding_rect, new_tristate
from .segment import labeling_boundaries


@dataclass(frozen=True)
class NoiseParams:
    jitter_sigma: float = 0.0
    drop_rate: float = 0.0
    spurious_rate: float = 0.0


@dataclass(frozen=True)
class SynthConfig:
    n_images: int = 20
    width: int = 128
    height: int = 128
    min_shapes: int = 1
    max_shapes: int = 4
    texture_amp: float = 12.0   # background texture amplitude, 0..255 scale
    train_frac: float = 0.8


def _ellipse_mask(h, w, cy, cx, ay, ax, angle):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    c, s = np.cos(angle), np.sin(angle)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


def _polygon_mask(h, w, pts):
    from matplotlib.path import Path as MplPath

    yy, xx = np.mgrid[0:h, 0:w]
    coords = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return MplPath(pts).contains_points(coords).reshape(h, w)


def synth_image(rng: np.random.Generator, width: int, height: int,
                n_shapes: int, texture_amp: float = 12.0):
    """One image: flat-color shapes over textured background.

    Returns (rgb uint8, instance labels int32 with 0 = background).
    """
    base = rng.integers(40, 216, size=3)
    noise = rng.normal(0, 1.0, size=(height, width))
    texture = ndimage.gaussian_filter(noise, 1.5)
    texture = texture / max(np.abs(texture).max(), 1e-9) * texture_amp
    img = np.clip(base[None, None, :] + texture[..., None], 0, 255)
    labels = np.zeros((height, width), dtype=np.int32)
    for i in range(1, n_shapes + 1):
        color = rng.integers(0, 256, size=3)
        while np.abs(color - base).max() < 60:   # keep figure/ground contrast
            color = rng.integers(0, 256, size=3)
        kind = rng.integers(0, 2)
        if kind == 0:
            cy = rng.uniform(0.2, 0.8) * height
            cx = rng.uniform(0.2, 0.8) * width
            ay = rng.uniform(0.10, 0.28) * height
            ax = rng.uniform(0.10, 0.28) * width
            mask = _ellipse_mask(height, width, cy, cx, ay, ax,
                                 rng.uniform(0, np.pi))
        else:
            n_pts = rng.integers(3, 6)
            cy = rng.uniform(0.25, 0.75) * height
            cx = rng.uniform(0.25, 0.75) * width
            angles = np.sort(rng.uniform(0, 2 * np.pi, n_pts))
            radius = rng.uniform(0.12, 0.30, n_pts) * min(height, width)
            pts = np.stack([cx + radius * np.cos(angles),
                            cy + radius * np.sin(angles)], axis=1)
            mask = _polygon_mask(height, width, pts)
        if mask.sum() < 40:
            continue
        img[mask] = color
        labels[mask] = i
    return img.astype(np.uint8), labels


def stable_boundaries(binary: np.ndarray, max_iters: int = 8) -> np.ndarray:
    """Reduce a binary map to a fixpoint of the benchmark thinning."""
    b = np.asarray(binary) > 0
    for _ in range(max_iters):
        thinned = nms_thin(b.astype(np.float64)) > 0
        if (thinned == b).all():
            break
        b = thinned
    return b.astype(np.uint8)


def clean_boundaries(labels: np.ndarray) -> np.ndarray:
    """NMS-stable object boundary map of an instance labeling."""
    return stable_boundaries(labeling_boundaries(labels))


def perfect_detections(labels: np.ndarray, image_id: str) -> list[tuple[str, DetectionBox]]:
    out = []
    for i in range(1, int(labels.max()) + 1):
        rect = mask_bounding_rect(labels == i)
        if rect is not None:
            out.append((image_id, DetectionBox(0, 1.0, rect)))
    return out


def _jitter_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    """Smooth per-pixel displacement bounded to the +-sigma range."""
    f = ndimage.gaussian_filter(rng.normal(0, 1.0, shape), 6.0)
    return np.clip(f * (1.5 * sigma / max(f.std(), 1e-9)), -sigma, sigma)


def corrupt_boundaries(labels: np.ndarray, noise: NoiseParams,
                       rng: np.random.Generator) -> np.ndarray:
    """Noisy boundary map: per-instance drops, contour jitter, fake contours.

    Jitter displaces contours through a smooth random field, so curves stay
    curves — the failure mode of human annotation, not salt-and-pepper.
    """
    h, w = labels.shape
    out = np.zeros((h, w), dtype=np.uint8)
    lab = np.asarray(labels)
    if noise.jitter_sigma > 0:
        # warp the labeling itself so the displaced contours stay closed
        # curves instead of dissolving into disconnected dots
        dy = _jitter_field(rng, (h, w), noise.jitter_sigma)
        dx = _jitter_field(rng, (h, w), noise.jitter_sigma)
        yy, xx = np.mgrid[0:h, 0:w]
        sy = np.clip(np.round(yy - dy).astype(np.int64), 0, h - 1)
        sx = np.clip(np.round(xx - dx).astype(np.int64), 0, w - 1)
        lab = lab[sy, sx]
    boundary = clean_boundaries(lab).astype(bool)
    owner = np.where(lab > 0, lab, 0)

    for i in range(1, int(lab.max()) + 1):
        if noise.drop_rate > 0 and rng.random() < noise.drop_rate:
            continue
        out[boundary & (owner == i)] = 1
    # boundary pixels sitting on background (right/bottom rule) follow suit
    stray = boundary & (owner == 0)
    if stray.any() and (noise.drop_rate == 0 or rng.random() >= noise.drop_rate):
        out[stray] = 1
    n_spurious = rng.poisson(noise.spurious_rate * max(int(labels.max()), 1))
    for _ in range(n_spurious):
        cy = rng.uniform(0.1, 0.9) * h
        cx = rng.uniform(0.1, 0.9) * w
        m = _ellipse_mask(h, w, cy, cx, rng.uniform(4, h / 4), rng.uniform(4, w / 4),
                          rng.uniform(0, np.pi))
        ring = m & ~ndimage.binary_erosion(m)
        out[ring] = 1
    return out


def boundary_tristate(boundary: np.ndarray) -> np.ndarray:
    mask = new_tristate(*boundary.shape, fill=NEGATIVE)
    mask[np.asarray(boundary) > 0] = POSITIVE
    return mask


def gen_synthetic(out_dir, config: SynthConfig, seed: int = 0) -> dict:
    """Write a dataset tree: images/, gt/, detections.jsonl, splits."""
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "gt").mkdir(parents=True, exist_ok=True)
    ids, det_records = [], []
    for i in range(config.n_images):
        image_id = f"synth_{i:05d}"
        rng = np.random.default_rng((seed, i))
        n_shapes = int(rng.integers(config.min_shapes, config.max_shapes + 1))
        img, labels = synth_image(rng, config.width, config.height, n_shapes,
                                  config.texture_amp)
        save_image(img, root / "images" / f"{image_id}.ppm")
        save_image(labels.astype(np.uint16), root / "gt" / f"{image_id}.pgm")
        det_records.extend(perfect_detections(labels, image_id))
        ids.append(image_id)
    save_detections(det_records, root / "detections.jsonl")
    n_train = int(round(config.train_frac * len(ids)))
    (root / "train.txt").write_text("\n".join(ids[:n_train]) + "\n")
    (root / "test.txt").write_text("\n".join(ids[n_train:]) + "\n" if ids[n_train:] else "")
    manifest = {"config": asdict(config), "seed": seed, "ids": ids,
                "train": ids[:n_train], "test": ids[n_train:]}
    (root / "synth_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest
