import numpy as np
import pytest

from weakbound.errors import FormatError, ValidationError
from weakbound.imageio import (load_detections, load_image, load_labeling,
                               load_prob_map, load_tristate, save_detections,
                               save_image, save_labeling, save_prob_map,
                               save_tristate)
from weakbound.raster import IGNORE, POSITIVE, DetectionBox, Rect, new_tristate


def test_ppm_roundtrip(tmp_path, rng):
    img = rng.integers(0, 256, size=(7, 9, 3)).astype(np.uint8)
    save_image(img, tmp_path / "a.ppm")
    assert np.array_equal(load_image(tmp_path / "a.ppm"), img)


def test_pgm8_roundtrip(tmp_path, rng):
    img = rng.integers(0, 256, size=(5, 4)).astype(np.uint8)
    save_image(img, tmp_path / "a.pgm")
    assert np.array_equal(load_image(tmp_path / "a.pgm"), img)


def test_pgm16_roundtrip(tmp_path, rng):
    img = rng.integers(0, 65536, size=(5, 4)).astype(np.uint16)
    save_image(img, tmp_path / "a.pgm")
    back = load_image(tmp_path / "a.pgm")
    assert back.dtype == np.uint16
    assert np.array_equal(back, img)


def test_pnm_comment_and_whitespace(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# a comment\n2 2\n255\n\x01\x02\x03\x04")
    assert np.array_equal(load_image(tmp_path / "c.pgm"),
                          np.array([[1, 2], [3, 4]], dtype=np.uint8))


def test_truncated_payload_rejected(tmp_path):
    (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(FormatError):
        load_image(tmp_path / "t.pgm")


def test_bad_magic_rejected(tmp_path):
    (tmp_path / "b.pgm").write_bytes(b"P9\n2 2\n255\n\x00\x00\x00\x00")
    with pytest.raises(FormatError):
        load_image(tmp_path / "b.pgm")


def test_prob_map_roundtrip(tmp_path, rng):
    prob = rng.random((6, 8))
    save_prob_map(prob, tmp_path / "p.pgm")
    back = load_prob_map(tmp_path / "p.pgm")
    # 16-bit quantization: half an LSB of 1/65535
    assert np.abs(back - prob).max() <= 0.5 / 65535 + 1e-12
    assert back.min() >= 0.0 and back.max() <= 1.0


def test_tristate_roundtrip(tmp_path):
    m = new_tristate(4, 4)
    m[1, 1] = POSITIVE
    m[2, 2] = IGNORE
    save_tristate(m, tmp_path / "m.pgm")
    assert np.array_equal(load_tristate(tmp_path / "m.pgm"), m)


def test_tristate_rejects_stray_values(tmp_path):
    save_image(np.full((3, 3), 7, dtype=np.uint8), tmp_path / "x.pgm")
    with pytest.raises(FormatError):
        load_tristate(tmp_path / "x.pgm")


def test_detections_roundtrip(tmp_path):
    records = [("img_a", DetectionBox(1, 0.9, Rect(0, 1, 5, 6))),
               ("img_b", DetectionBox(0, 0.25, Rect(2, 2, 4, 9)))]
    save_detections(records, tmp_path / "d.jsonl")
    back = load_detections(tmp_path / "d.jsonl")
    assert back == records


def test_detections_score_out_of_range(tmp_path):
    (tmp_path / "d.jsonl").write_text(
        '{"image": "a", "class": 0, "score": 1.5, "box": [0, 0, 2, 2]}\n')
    with pytest.raises(ValidationError, match="1:"):
        load_detections(tmp_path / "d.jsonl")


def test_detections_degenerate_box(tmp_path):
    (tmp_path / "d.jsonl").write_text(
        '{"image": "a", "class": 0, "score": 0.5, "box": [0, 0, 2, 2]}\n'
        '{"image": "a", "class": 0, "score": 0.5, "box": [3, 3, 3, 9]}\n')
    with pytest.raises(ValidationError, match="2:"):
        load_detections(tmp_path / "d.jsonl")


def test_detections_bad_json(tmp_path):
    (tmp_path / "d.jsonl").write_text("not json\n")
    with pytest.raises(FormatError):
        load_detections(tmp_path / "d.jsonl")


def test_labeling_roundtrip(tmp_path, rng):
    labels = rng.integers(0, 40, size=(10, 12)).astype(np.int32)
    save_labeling(labels, 40, tmp_path / "l.pgm", params={"k": 300})
    back, n = load_labeling(tmp_path / "l.pgm")
    assert n == 40
    assert np.array_equal(back, labels)
