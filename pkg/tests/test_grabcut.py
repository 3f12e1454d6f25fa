import numpy as np
import pytest

from weakbound.errors import ParameterError
from weakbound.grabcut import grabcut, grabcut_annotation
from weakbound.raster import IGNORE, NEGATIVE, POSITIVE, DetectionBox, Rect


def flat_object_image(h=48, w=48, rect=Rect(14, 12, 34, 36)):
    img = np.full((h, w, 3), (30, 90, 30), dtype=np.uint8)
    img[rect.y0:rect.y1, rect.x0:rect.x1] = (220, 60, 60)
    return img, rect


def test_flat_color_recovers_exact_rect():
    img, obj = flat_object_image()
    result = grabcut(img, obj.dilate(4).clip(48, 48), iters=3, seed=0)
    expect = np.zeros((48, 48), dtype=np.uint8)
    expect[obj.y0:obj.y1, obj.x0:obj.x1] = 1
    assert np.array_equal(result.mask, expect)


def test_energy_trace_non_increasing(rng):
    from weakbound.synth import synth_image

    for i in range(10):
        img, labels = synth_image(np.random.default_rng(i), 48, 48, 1)
        ys, xs = np.nonzero(labels)
        if ys.size == 0:
            continue
        box = Rect(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)
        trace = grabcut(img, box, iters=4, seed=i).energy_trace
        for a, b in zip(trace, trace[1:]):
            assert b <= a + 1e-6 * abs(a) + 1e-9


def test_rect_outside_image_rejected():
    img = np.zeros((20, 20, 3), dtype=np.uint8)
    with pytest.raises(ParameterError):
        grabcut(img, Rect(30, 30, 40, 40))


def test_iters_validated():
    img = np.zeros((20, 20, 3), dtype=np.uint8)
    with pytest.raises(ParameterError):
        grabcut(img, Rect(2, 2, 8, 8), iters=0)


def test_annotation_accept_marks_contour():
    img, obj = flat_object_image()
    det = DetectionBox(0, 1.0, obj.dilate(2))
    out = grabcut_annotation(img, [det], iou_accept=0.7, seed=0)
    pos = out == POSITIVE
    assert pos.any()
    # positives stay within the (slightly dilated) detection box
    dil = det.rect.dilate(1)
    outside = pos.copy()
    outside[dil.y0:dil.y1, dil.x0:dil.x1] = False
    assert not outside.any()
    assert (out == IGNORE).sum() == 0


def test_annotation_reject_marks_box_ignore():
    # uniform noise: the segmentation cannot match the box
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, size=(40, 40, 3)).astype(np.uint8)
    det = DetectionBox(0, 1.0, Rect(8, 8, 30, 30))
    out = grabcut_annotation(img, [det], iou_accept=0.99, seed=0)
    region = out[8:30, 8:30]
    assert (region == IGNORE).all()
    out_no_box = out.copy()
    out_no_box[8:30, 8:30] = NEGATIVE
    assert (out_no_box == NEGATIVE).all()


def test_annotation_bad_mode():
    img = np.zeros((20, 20, 3), dtype=np.uint8)
    with pytest.raises(ParameterError):
        grabcut_annotation(img, [], iou_mode="banana")
