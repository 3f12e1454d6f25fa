import numpy as np
import pytest

from weakbound.canny import canny, hysteresis
from weakbound.errors import ParameterError


def test_vertical_step_edge():
    img = np.zeros((32, 32), dtype=np.uint8)
    img[:, 16:] = 255
    edges = canny(img, sigma=1.0, low=0.05, high=0.1)
    ys, xs = np.nonzero(edges)
    assert ys.size > 0
    # all edge pixels hug the step, one pixel per row there
    assert set(np.unique(xs)) <= {15, 16}
    inner = edges[3:-3]
    assert (inner.sum(axis=1) == 1).all()


def test_flat_image_no_edges():
    assert canny(np.full((16, 16), 90, dtype=np.uint8)).sum() == 0


def test_low_above_high_rejected():
    with pytest.raises(ParameterError):
        canny(np.zeros((8, 8)), low=0.5, high=0.1)
    with pytest.raises(ParameterError):
        hysteresis(np.zeros((8, 8)), 0.5, 0.1)


def test_hysteresis_keeps_connected_weak():
    mag = np.zeros((5, 7))
    mag[2, 1:6] = 0.15          # weak ridge ...
    mag[2, 3] = 0.9             # ... anchored by one strong pixel
    mag[0, 0] = 0.15            # isolated weak pixel
    out = hysteresis(mag, low=0.1, high=0.5)
    assert out[2, 1:6].all()
    assert out[0, 0] == 0


def test_rgb_input_accepted(shapes_image):
    img, _ = shapes_image
    edges = canny(img)
    assert edges.shape == img.shape[:2]
    assert set(np.unique(edges)) <= {0, 1}
