import json

import numpy as np
import pytest

from weakbound.cli import main
from weakbound.imageio import load_prob_map, load_tristate


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full synth->annotate->train->predict->fuse->eval run."""
    base = tmp_path_factory.mktemp("cli")
    cfg = {
        "dataset": {"root": str(base / "data")},
        "synth": {"n_images": 8, "width": 96, "height": 96, "max_shapes": 3},
        "forest": {"n_trees": 2, "n_pos": 60, "n_neg": 60, "source": "gt"},
        "eval": {"n_thresh": 10},
        "seed": 3,
        "out": str(base / "out"),
    }
    cfg_path = base / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    for cmd in ("synth", "annotate", "train", "predict", "fuse", "eval"):
        assert main([cmd, "--config", str(cfg_path)]) == 0
    return base, cfg_path, cfg


def test_stage_outputs(pipeline):
    base, _, cfg = pipeline
    out = base / "out"
    manifest = json.loads((out / "annotations" / "manifest.json").read_text())
    assert manifest["variant"] == "FH_BBS"
    assert len(manifest["images"]) > 0
    # annotated + skipped partition the train split exactly
    train_ids = (base / "data" / "train.txt").read_text().split()
    assert sorted(list(manifest["images"]) + manifest["skipped"]) == sorted(train_ids)
    # skipped images are exactly those without any detection
    detected = {json.loads(l)["image"]
                for l in (base / "data" / "detections.jsonl").read_text().splitlines() if l}
    assert set(manifest["skipped"]) == set(train_ids) - detected
    for image_id in manifest["images"]:
        mask = load_tristate(out / "annotations" / f"{image_id}.pgm")
        assert mask.shape == (96, 96)
    assert (out / "model.sedf").exists()
    summary = json.loads((out / "eval" / "summary.json").read_text())
    assert set(summary) >= {"ods", "ois", "ap"}
    assert 0.0 <= summary["ods"] <= 1.0
    header = (out / "eval" / "per_image.csv").read_text().splitlines()[0]
    assert header == "image,threshold,tp,fp,sum_r_tp,sum_r_total"


def test_fuse_suppresses_background(pipeline):
    base, _, cfg = pipeline
    out = base / "out"
    test_ids = (base / "data" / "test.txt").read_text().split()
    for image_id in test_ids:
        pred = load_prob_map(out / "pred" / f"{image_id}.pgm")
        fused = load_prob_map(out / "fused" / f"{image_id}.pgm")
        assert (fused <= pred + 1 / 65535).all()


def test_report_two_methods(pipeline, tmp_path):
    base, cfg_path, cfg = pipeline
    cfg2 = dict(cfg)
    cfg2["report"] = [
        {"name": "raw", "eval_dir": str(base / "out" / "eval")},
        {"name": "again", "eval_dir": str(base / "out" / "eval")},
    ]
    p = tmp_path / "rep.json"
    p.write_text(json.dumps(cfg2))
    assert main(["report", "--config", str(p)]) == 0
    report = base / "out" / "report"
    rows = (report / "comparison.csv").read_text().splitlines()
    assert len(rows) == 3  # header + 2 methods
    assert (report / "raw_pr.png").exists()
    assert (report / "again_pr.png").exists()
    assert (report / "pr_curves.png").exists()


def test_report_without_methods_is_config_error(pipeline):
    _, cfg_path, _ = pipeline
    assert main(["report", "--config", str(cfg_path)]) == 2


def test_model_inspect(pipeline, capsys):
    _, cfg_path, _ = pipeline
    assert main(["model-inspect", "--config", str(cfg_path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n_trees"] == 2 and info["magic"] == "SEDF0001"


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"mystery": 1}')
    assert main(["synth", "--config", str(bad)]) == 2
    assert main(["synth", "--config", str(tmp_path / "missing.json")]) == 2


def test_exit_code_data_error(pipeline, tmp_path):
    _, cfg_path, cfg = pipeline
    cfg2 = dict(cfg)
    cfg2["out"] = str(tmp_path / "empty")
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg2))
    assert main(["predict", "--config", str(p)]) == 3


def test_exit_code_version_error(pipeline, tmp_path):
    base, _, cfg = pipeline
    model = base / "out" / "model.sedf"
    corrupt_dir = tmp_path / "v"
    corrupt_dir.mkdir()
    data = bytearray(model.read_bytes())
    data[:8] = b"XXXX9999"
    (corrupt_dir / "model.sedf").write_bytes(bytes(data))
    cfg2 = dict(cfg)
    cfg2["out"] = str(corrupt_dir)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg2))
    assert main(["model-inspect", "--config", str(p)]) == 4


def test_annotate_skips_undetected(pipeline, tmp_path):
    base, _, cfg = pipeline
    # drop every detection for the first training image
    det_path = base / "data" / "detections.jsonl"
    lines = det_path.read_text().splitlines()
    first_id = (base / "data" / "train.txt").read_text().split()[0]
    kept = [l for l in lines if json.loads(l)["image"] != first_id]
    data2 = tmp_path / "data2"
    data2.mkdir()
    for sub in ("images", "gt"):
        (data2 / sub).symlink_to(base / "data" / sub)
    (data2 / "detections.jsonl").write_text("\n".join(kept) + "\n")
    (data2 / "train.txt").write_text((base / "data" / "train.txt").read_text())
    (data2 / "test.txt").write_text((base / "data" / "test.txt").read_text())
    cfg2 = dict(cfg)
    cfg2["dataset"] = {"root": str(data2)}
    cfg2["out"] = str(tmp_path / "out2")
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg2))
    assert main(["annotate", "--config", str(p)]) == 0
    manifest = json.loads((tmp_path / "out2" / "annotations" / "manifest.json").read_text())
    assert first_id in manifest["skipped"]
    assert first_id not in manifest["images"]


def test_annotate_rerun_identical_hashes(pipeline):
    base, cfg_path, _ = pipeline
    manifest_path = base / "out" / "annotations" / "manifest.json"
    before = manifest_path.read_text()
    assert main(["annotate", "--config", str(cfg_path)]) == 0
    assert manifest_path.read_text() == before


def test_seed_override(pipeline, tmp_path):
    _, cfg_path, cfg = pipeline
    out2 = tmp_path / "seeded"
    assert main(["annotate", "--config", str(cfg_path), "--seed", "99",
                 "--out", str(out2)]) == 0
    m1 = json.loads((out2 / "annotations" / "manifest.json").read_text())
    assert m1["seed"] == 99
