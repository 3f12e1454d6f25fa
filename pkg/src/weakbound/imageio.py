"""Bit-exact image and annotation file I/O.

Formats:
  - PPM (P6) / PGM (P5), 8-bit: images and tri-state masks.
  - PGM (P5), 16-bit big-endian: probability maps and region-label maps.
  - PNG (8-bit, via Pillow): optional alternative behind the same entry points.
  - Detections: JSON Lines, one object per line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .raster import DetectionBox, Rect, check_tristate

_MAGIC_TO_CHANNELS = {b"P6": 3, b"P5": 1}


def _read_pnm_header(buf: bytes, path) -> tuple[bytes, int, int, int, int]:
    """Parse a PNM header; returns (magic, width, height, maxval, data offset)."""
    pos = 0

    def token():
        nonlocal pos
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":  # comment to EOL
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
            return token()
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header at byte {start}")
        return buf[start:pos]

    magic = token()
    if magic not in _MAGIC_TO_CHANNELS:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    fields = []
    for name in ("width", "height", "maxval"):
        tok = token()
        try:
            fields.append(int(tok))
        except ValueError:
            raise FormatError(f"{path}: non-numeric {name} {tok!r} at byte {pos}")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    return magic, width, height, maxval, pos


def load_image(path) -> np.ndarray:
    """Load PPM/PGM/PNG; returns uint8 (H,W) or (H,W,3), or uint16 (H,W)."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im)
    buf = path.read_bytes()
    magic, width, height, maxval, off = _read_pnm_header(buf, path)
    channels = _MAGIC_TO_CHANNELS[magic]
    bpp = 1 if maxval == 255 else 2
    expected = width * height * channels * bpp
    payload = buf[off:off + expected]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}")
    if bpp == 1:
        arr = np.frombuffer(payload, dtype=np.uint8)
    else:
        arr = np.frombuffer(payload, dtype=">u2").astype(np.uint16)
    if channels == 3:
        return arr.reshape(height, width, 3)
    return arr.reshape(height, width)


def save_image(img: np.ndarray, path) -> None:
    """Save to PPM/PGM/PNG chosen by extension; round-trip is bit-exact."""
    path = Path(path)
    img = np.asarray(img)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(img).save(path, optimize=False)
        return
    if img.ndim == 3:
        magic, channels = b"P6", 3
        if img.dtype != np.uint8:
            raise ValueError("PPM images must be uint8")
    elif img.ndim == 2:
        magic, channels = b"P5", 1
    else:
        raise ValueError(f"unsupported image shape {img.shape}")
    h, w = img.shape[:2]
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    elif img.dtype == np.uint16:
        maxval, payload = 65535, img.astype(">u2").tobytes()
    else:
        raise ValueError(f"unsupported dtype {img.dtype}")
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + payload)
    tmp.replace(path)


def save_prob_map(prob: np.ndarray, path) -> None:
    """Unit-interval map stored as 16-bit PGM."""
    prob = np.asarray(prob, dtype=np.float64)
    if prob.min() < 0 or prob.max() > 1:
        raise ValueError("probability map outside [0,1]")
    save_image(np.round(prob * 65535).astype(np.uint16), path)


def load_prob_map(path) -> np.ndarray:
    img = load_image(path)
    if img.ndim != 2:
        raise FormatError(f"{path}: probability map must be single channel")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    return img.astype(np.float64) / scale


def save_tristate(mask: np.ndarray, path) -> None:
    save_image(check_tristate(np.asarray(mask, dtype=np.uint8)), path)


def load_tristate(path) -> np.ndarray:
    img = load_image(path)
    if img.ndim != 2:
        raise FormatError(f"{path}: tri-state mask must be single channel")
    try:
        return check_tristate(img.astype(np.uint8))
    except ValueError as e:
        raise FormatError(f"{path}: {e}")


def load_detections(path) -> list[tuple[str, DetectionBox]]:
    """Read detection JSONL; preserves order, validates each line."""
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: bad JSON ({e})")
            try:
                image = obj["image"]
                class_id = int(obj["class"])
                score = float(obj["score"])
                x0, y0, x1, y1 = (int(v) for v in obj["box"])
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"{path}:{lineno}: malformed record ({e})")
            if not 0.0 <= score <= 1.0:
                raise ValidationError(f"{path}:{lineno}: score {score} outside [0,1]")
            if x1 <= x0 or y1 <= y0:
                raise ValidationError(f"{path}:{lineno}: degenerate box {[x0, y0, x1, y1]}")
            out.append((image, DetectionBox(class_id, score, Rect(x0, y0, x1, y1))))
    return out


def save_detections(records, path) -> None:
    """Inverse of load_detections; records are (image_id, DetectionBox)."""
    with open(path, "w") as f:
        for image_id, det in records:
            r = det.rect
            f.write(json.dumps({
                "image": image_id, "class": det.class_id, "score": det.score,
                "box": [r.x0, r.y0, r.x1, r.y1]}) + "\n")


def save_labeling(labels: np.ndarray, num_regions: int, path, params: dict | None = None) -> None:
    """Region labels as 16-bit PGM with a JSON sidecar (num_regions, params)."""
    if num_regions > 65536:
        raise ValueError(f"{num_regions} regions exceed 16-bit label range")
    save_image(labels.astype(np.uint16), path)
    sidecar = {"num_regions": num_regions, "params": params or {}}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_labeling(path) -> tuple[np.ndarray, int]:
    labels = load_image(path).astype(np.int32)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    return labels, int(sidecar["num_regions"])
