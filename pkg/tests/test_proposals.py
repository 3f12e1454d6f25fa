import numpy as np
import pytest

from weakbound.errors import ParameterError
from weakbound.proposals import (Proposal, SimilarityWeights, _rle_decode,
                                 _rle_encode, consensus_boundaries,
                                 load_proposals, match_proposals,
                                 save_proposals, selective_search,
                                 union_boundaries)
from weakbound.raster import IGNORE, NEGATIVE, POSITIVE, DetectionBox, Rect
from weakbound.segment import FhParams, SegmentLabeling, fh_segment


def quadrant_image(n=24):
    img = np.zeros((n, n, 3), dtype=np.uint8)
    img[:n // 2, :n // 2] = (250, 30, 30)
    img[:n // 2, n // 2:] = (30, 250, 30)
    img[n // 2:, :n // 2] = (30, 30, 250)
    img[n // 2:, n // 2:] = (240, 240, 40)
    return img


def test_full_hierarchy_count():
    img = quadrant_image()
    seg = fh_segment(img, FhParams(k=20, sigma=0.0, min_size=10))
    assert seg.num_regions == 4
    props = selective_search(img, seg)
    # n leaves plus n-1 merges, all masks distinct here
    assert len(props) == 2 * seg.num_regions - 1
    assert props[-1].mask.all()


def test_proposals_nested_union(rng):
    img = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
    seg = fh_segment(img, FhParams(k=40, sigma=0.5, min_size=10))
    props = selective_search(img, seg)
    assert len(props) <= 2 * seg.num_regions - 1
    for p in props:
        area = p.mask.sum()
        assert area > 0
        assert p.rect == Rect(*_tight(p.mask))


def _tight(mask):
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def test_match_proposals_threshold():
    m1 = np.zeros((20, 20), dtype=bool)
    m1[0:10, 0:10] = True
    m2 = np.zeros((20, 20), dtype=bool)
    m2[0:10, 0:5] = True
    props = [Proposal(m1, Rect(0, 0, 10, 10), "leaf"),
             Proposal(m2, Rect(0, 0, 5, 10), "leaf")]
    dets = [DetectionBox(0, 1.0, Rect(0, 0, 10, 10))]
    matched = match_proposals(props, dets, iou_min=0.9)
    assert matched[0] == [props[0]]


def test_union_boundaries_requires_nonempty():
    with pytest.raises(ParameterError):
        union_boundaries([])


def test_union_boundaries_is_or_of_contours():
    a = np.zeros((12, 12), dtype=bool)
    a[2:6, 2:6] = True
    b = np.zeros((12, 12), dtype=bool)
    b[6:10, 6:10] = True
    u = union_boundaries([Proposal(a, Rect(2, 2, 6, 6), "x"),
                          Proposal(b, Rect(6, 6, 10, 10), "x")])
    assert u.astype(bool).sum() == 24  # two disjoint 12-pixel rings


def test_consensus_identical_maps_no_ignore():
    m = np.zeros((10, 10), dtype=np.uint8)
    m[4, 2:8] = 1
    out = consensus_boundaries([m] * 5, agreement=0.7, tol=1)
    assert (out[m > 0] == POSITIVE).all()
    assert (out == IGNORE).sum() == 0


def test_consensus_minority_becomes_ignore():
    base = np.zeros((10, 10), dtype=np.uint8)
    base[4, 2:8] = 1
    lone = np.zeros((10, 10), dtype=np.uint8)
    lone[8, 8] = 1
    out = consensus_boundaries([base] * 9 + [lone], agreement=0.7, tol=1)
    assert (out[base > 0] == POSITIVE).all()
    assert out[8, 8] == IGNORE


def test_consensus_monotone_in_agreement(rng):
    maps = [(rng.random((16, 16)) < 0.2).astype(np.uint8) for _ in range(6)]
    pos_counts = [
        (consensus_boundaries(maps, agreement=a, tol=1) == POSITIVE).sum()
        for a in (0.3, 0.5, 0.7, 0.9)]
    assert all(x >= y for x, y in zip(pos_counts, pos_counts[1:]))


def test_rle_roundtrip(rng):
    for _ in range(50):
        mask = rng.random((9, 13)) < rng.random()
        runs = _rle_encode(mask)
        assert np.array_equal(_rle_decode(runs, 9, 13), mask)


def test_proposal_file_roundtrip(tmp_path, rng):
    mask = rng.random((8, 8)) < 0.4
    mask[0, 0] = True
    prop = Proposal(mask, Rect(*_tight(mask)), "leaf")
    save_proposals([("img", prop)], tmp_path / "p.jsonl")
    back = load_proposals(tmp_path / "p.jsonl")
    assert len(back) == 1
    assert back[0][0] == "img"
    assert np.array_equal(back[0][1].mask, mask)
    assert back[0][1].rect == prop.rect


def test_similarity_weights_validated():
    with pytest.raises(Exception):
        SimilarityWeights(color=-1.0)
