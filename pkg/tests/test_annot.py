import numpy as np
import pytest

from weakbound.annot import (VARIANTS, AnnotationRecipe, build_annotation,
                             fh_cap_bbs, quantile_mask)
from weakbound.errors import ConfigError
from weakbound.raster import (IGNORE, NEGATIVE, POSITIVE, DetectionBox, Rect)
from weakbound.segment import FhParams, SegmentLabeling, fh_segment


def test_unknown_variant_rejected():
    with pytest.raises(ConfigError):
        AnnotationRecipe("NOT_A_VARIANT")


def test_threshold_range_validated():
    with pytest.raises(ConfigError):
        AnnotationRecipe("FH_BBS", score_min=1.5)


def test_quantile_fixture_100_values():
    prob = (np.arange(1, 101, dtype=np.float64) / 100).reshape(10, 10)
    out = quantile_mask(prob, q=0.15)
    # values >= 0.86 survive: exactly 15 positives
    assert (out == POSITIVE).sum() == 15
    assert (out[prob >= 0.86] == POSITIVE).all()
    assert (out == NEGATIVE).sum() == 0
    assert (out == IGNORE).sum() == 85


def test_quantile_constant_map_all_positive():
    prob = np.full((6, 6), 0.4)
    out = quantile_mask(prob, q=0.15)
    assert (out == POSITIVE).all()


def test_quantile_zero_pixels_negative():
    prob = np.zeros((6, 6))
    prob[0, :] = np.linspace(0.4, 0.9, 6)
    out = quantile_mask(prob, q=0.5)
    assert (out[prob == 0] == NEGATIVE).all()
    assert (out[0, :] == POSITIVE).sum() == 3
    assert (out[0, 3:] == POSITIVE).all()


def test_quantile_all_zero_map():
    out = quantile_mask(np.zeros((5, 5)), q=0.15)
    assert (out == NEGATIVE).all()


def test_quantile_fraction_bounds(rng):
    q = 0.15
    for _ in range(50):
        prob = rng.random((20, 20))
        out = quantile_mask(prob, q)
        frac = (out == POSITIVE).sum() / prob.size
        assert q - 1 / prob.size - 1e-12 <= frac <= q + 1e-12


def test_quantile_bad_q():
    with pytest.raises(ConfigError):
        quantile_mask(np.ones((3, 3)), q=0.0)


def _two_region_seg():
    labels = np.zeros((20, 20), dtype=np.int32)
    labels[:, 10:] = 1
    return SegmentLabeling(labels, 2)


def test_fh_cap_no_detections_all_negative():
    out = fh_cap_bbs(_two_region_seg(), [])
    assert (out == NEGATIVE).all()


def test_fh_cap_contained_segment_positive():
    seg = _two_region_seg()
    det = DetectionBox(0, 1.0, Rect(9, 0, 20, 20))  # right half + one column
    out = fh_cap_bbs(seg, [det], contain_frac=0.95)
    assert (out == POSITIVE).any()
    # only boundary pixels of the contained right segment fire
    assert (out[:, :9] == NEGATIVE).all()


def test_fh_cap_straddling_segment_negative():
    seg = _two_region_seg()
    # box covers only 60% of the right segment
    det = DetectionBox(0, 1.0, Rect(10, 0, 16, 20))
    out = fh_cap_bbs(seg, [det], contain_frac=0.95)
    assert (out == NEGATIVE).all()


def test_build_annotation_fh(shapes_image):
    img, _ = shapes_image
    recipe = AnnotationRecipe("FH_BBS", fh=FhParams(k=100, min_size=20))
    dets = [DetectionBox(0, 0.95, Rect(5, 5, 90, 90))]
    out = build_annotation(recipe, img, dets, seed=0)
    assert out.shape == img.shape[:2]
    assert set(np.unique(out)) <= {NEGATIVE, IGNORE, POSITIVE}


def test_build_annotation_missing_external():
    recipe = AnnotationRecipe("MCG_BBS")
    img = np.zeros((40, 40, 3), dtype=np.uint8)
    with pytest.raises(ConfigError, match="proposals"):
        build_annotation(recipe, img, [], external_maps={})
    with pytest.raises(ConfigError, match="prob"):
        build_annotation(AnnotationRecipe("SE_QUANTILE"), img, [], external_maps={})


def test_build_annotation_se_quantile():
    recipe = AnnotationRecipe("SE_QUANTILE", quantile=0.15)
    img = np.zeros((10, 10, 3), dtype=np.uint8)
    prob = (np.arange(1, 101, dtype=np.float64) / 100).reshape(10, 10)
    out = build_annotation(recipe, img, [], external_maps={"prob": prob})
    assert (out == POSITIVE).sum() == 15


def test_variant_list_stable():
    assert "FH_BBS" in VARIANTS and "CONS_ALL_BBS" in VARIANTS
    assert len(VARIANTS) == 8
