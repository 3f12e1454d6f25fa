"""Assembly of the named weak-annotation variants into tri-state masks."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError
from .grabcut import grabcut_annotation
from .proposals import (Proposal, consensus_boundaries, match_proposals,
                        selective_search, union_boundaries)
from .raster import (IGNORE, NEGATIVE, POSITIVE, filter_detections,
                     new_tristate)
from .segment import FhParams, SegmentLabeling, fh_segment, mask_contour

VARIANTS = ("FH_BBS", "GRABCUT_BBS", "SESE_BBS", "MCG_BBS", "CONS_MCG_BBS",
            "CONS_SG_BBS", "CONS_ALL_BBS", "SE_QUANTILE")

# consensus level that only full agreement of the source maps exceeds
_STRICT_AGREEMENT = 0.999


@dataclass(frozen=True)
class AnnotationRecipe:
    variant: str
    score_min: float = 0.8
    iou_grabcut: float = 0.7
    iou_proposal: float = 0.9
    agreement: float = 0.7
    quantile: float = 0.15
    contain_frac: float = 0.95
    tol: int = 1
    fh: FhParams = field(default_factory=FhParams)
    grabcut_iters: int = 5
    max_proposals: int = 1000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown annotation variant {self.variant!r}")
        for name in ("score_min", "iou_grabcut", "iou_proposal", "agreement",
                     "quantile", "contain_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0,1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fh"] = self.fh.to_dict()
        return d


def fh_cap_bbs(seg: SegmentLabeling, detections, contain_frac: float = 0.95) -> np.ndarray:
    """Positive boundaries of segments mostly contained in a detection box."""
    h, w = seg.shape
    contained = np.zeros(seg.num_regions, dtype=bool)
    sizes = np.bincount(seg.labels.ravel(), minlength=seg.num_regions)
    for det in detections:
        r = det.rect.clip(w, h)
        if r is None:
            continue
        inside = np.bincount(seg.labels[r.y0:r.y1, r.x0:r.x1].ravel(),
                             minlength=seg.num_regions)
        contained |= inside >= contain_frac * sizes
    out = new_tristate(h, w, NEGATIVE)
    # each region's own contour: any 4-neighbor differs, or the image edge
    lab = seg.labels
    contour = np.zeros((h, w), dtype=bool)
    contour[0, :] = contour[-1, :] = True
    contour[:, 0] = contour[:, -1] = True
    horiz = lab[:, 1:] != lab[:, :-1]
    vert = lab[1:, :] != lab[:-1, :]
    contour[:, 1:] |= horiz
    contour[:, :-1] |= horiz
    contour[1:, :] |= vert
    contour[:-1, :] |= vert
    out[contour & contained[lab]] = POSITIVE
    return out


def quantile_mask(prob: np.ndarray, q: float = 0.15) -> np.ndarray:
    """Top-q fraction of the nonzero probabilities as Positive pseudo-labels.

    Zero pixels stay Negative, sub-threshold nonzero pixels become Ignore.
    With fewer nonzero pixels than 1/q the mask is all Negative/Ignore.
    """
    if not 0.0 < q < 1.0:
        raise ConfigError(f"quantile {q} outside (0,1)")
    prob = np.asarray(prob, dtype=np.float64)
    out = new_tristate(*prob.shape, fill=NEGATIVE)
    nonzero = prob[prob > 0]
    out[prob > 0] = IGNORE
    k = int(np.floor(q * nonzero.size))
    if k >= 1:
        thr = np.sort(nonzero)[nonzero.size - k]
        out[prob >= thr] = POSITIVE
    return out


def _proposal_variant(image, detections, recipe: AnnotationRecipe,
                      proposals: list[Proposal], consensus: bool) -> np.ndarray:
    h, w = np.asarray(image).shape[:2]
    out = new_tristate(h, w, NEGATIVE)
    matched = match_proposals(proposals, detections, recipe.iou_proposal)
    contours = []
    for d, det in enumerate(detections):
        if matched[d]:
            contours.extend(mask_contour(p.mask) for p in matched[d])
        else:
            r = det.rect.clip(w, h)
            if r is not None:
                out[r.y0:r.y1, r.x0:r.x1] = IGNORE
    if not contours:
        return out
    if consensus:
        cons = consensus_boundaries(contours, recipe.agreement, recipe.tol)
        out[cons == IGNORE] = IGNORE
        out[cons == POSITIVE] = POSITIVE
    else:
        union = np.zeros((h, w), dtype=np.uint8)
        for c in contours:
            union |= c
        out[union.astype(bool)] = POSITIVE
    return out


def build_annotation(recipe: AnnotationRecipe, image: np.ndarray, detections,
                     external_maps: dict | None = None, seed: int = 0) -> np.ndarray:
    """Dispatch an annotation recipe to its generator chain."""
    external_maps = external_maps or {}
    retained = filter_detections(detections, recipe.score_min)
    h, w = np.asarray(image).shape[:2]

    def need(key: str):
        if key not in external_maps:
            raise ConfigError(f"variant {recipe.variant} needs external input {key!r}")
        return external_maps[key]

    if recipe.variant == "FH_BBS":
        return fh_cap_bbs(fh_segment(image, recipe.fh), retained, recipe.contain_frac)

    if recipe.variant == "GRABCUT_BBS":
        return grabcut_annotation(image, retained, iou_accept=recipe.iou_grabcut,
                                  iters=recipe.grabcut_iters, seed=seed)

    if recipe.variant in ("SESE_BBS", "MCG_BBS", "CONS_MCG_BBS"):
        if recipe.variant == "SESE_BBS":
            props = selective_search(image, fh_segment(image, recipe.fh),
                                     max_proposals=recipe.max_proposals)
        else:
            props = need("proposals")
        return _proposal_variant(image, retained, recipe, props,
                                 consensus=recipe.variant == "CONS_MCG_BBS")

    if recipe.variant == "SE_QUANTILE":
        return quantile_mask(need("prob"), recipe.quantile)

    if recipe.variant in ("CONS_SG_BBS", "CONS_ALL_BBS"):
        if recipe.variant == "CONS_SG_BBS":
            se_pos = (quantile_mask(need("prob"), recipe.quantile) == POSITIVE)
            sources = [se_pos.astype(np.uint8)]
        else:
            mcg = _proposal_variant(image, retained, recipe, need("proposals"),
                                    consensus=False)
            sources = [(mcg == POSITIVE).astype(np.uint8)]
        sese = _proposal_variant(
            image, retained, recipe,
            selective_search(image, fh_segment(image, recipe.fh),
                             max_proposals=recipe.max_proposals),
            consensus=False)
        grab = grabcut_annotation(image, retained, iou_accept=recipe.iou_grabcut,
                                  iters=recipe.grabcut_iters, seed=seed)
        sources += [(sese == POSITIVE).astype(np.uint8),
                    (grab == POSITIVE).astype(np.uint8)]
        # strict intersection of the three methods, with spatial tolerance
        return consensus_boundaries(sources, _STRICT_AGREEMENT, recipe.tol)

    raise ConfigError(f"unhandled variant {recipe.variant}")
