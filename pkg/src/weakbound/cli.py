"""Command-line pipeline driver.

Stages (annotate, train, predict, fuse, eval, report) read and write a
flat output directory, so any stage can be deleted and rerun in
isolation. Exit codes: 0 ok, 2 config error, 3 data error, 4 version
mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .annot import build_annotation
from .bench import pr_curve
from .config import PipelineConfig, load_config, to_dict
from .errors import ConfigError, DataError, VersionError, WeakboundError
from .forest import (TrainingSamples, inspect_forest, load_forest, predict,
                     sample_training_patches, save_forest, train_forest)
from .fusion import fuse, objectness
from .imageio import (load_detections, load_image, load_prob_map,
                      load_tristate, save_prob_map, save_tristate)
from .proposals import load_proposals
from .synth import (boundary_tristate, clean_boundaries, corrupt_boundaries,
                    gen_synthetic)


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise DataError(f"missing {what}: {path}")
    return Path(path)


def _read_split(cfg: PipelineConfig, name: str) -> list[str]:
    path = _require(cfg.dataset.path(name), "split file")
    ids = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not ids:
        raise DataError(f"split file {path} lists no images")
    return ids


def _load_rgb(cfg: PipelineConfig, image_id: str) -> np.ndarray:
    path = _require(cfg.dataset.path(cfg.dataset.images_dir, image_id + ".ppm"),
                    "image")
    img = load_image(path)
    if img.ndim != 3:
        raise DataError(f"{path}: expected an RGB image")
    return img


def _load_gt_labels(cfg: PipelineConfig, image_id: str) -> np.ndarray:
    path = _require(cfg.dataset.path(cfg.dataset.gt_dir, image_id + ".pgm"),
                    "ground-truth mask")
    return load_image(path).astype(np.int32)


def _group_detections(path) -> dict:
    grouped: dict = {}
    for image_id, det in load_detections(path):
        grouped.setdefault(image_id, []).append(det)
    return grouped


def _atomic_json(obj, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")
    os.replace(tmp, path)


def _pmap(fn, items, jobs: int):
    """Order-preserving map, threaded when more than one job is requested."""
    jobs = jobs if jobs > 0 else (os.cpu_count() or 1)
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# stages


def cmd_synth(cfg: PipelineConfig, out: Path) -> int:
    manifest = gen_synthetic(cfg.dataset.root, cfg.synth, seed=cfg.seed)
    print(f"synth: wrote {len(manifest['ids'])} images under {cfg.dataset.root}")
    return 0


def cmd_annotate(cfg: PipelineConfig, out: Path) -> int:
    ids = _read_split(cfg, cfg.dataset.train_split)
    det_path = _require(cfg.dataset.path(cfg.dataset.detections), "detections file")
    dets = _group_detections(det_path)
    props: dict = {}
    if cfg.dataset.proposals is not None:
        prop_path = _require(cfg.dataset.path(cfg.dataset.proposals),
                             "proposals file")
        for image_id, prop in load_proposals(prop_path):
            props.setdefault(image_id, []).append(prop)

    annot_dir = out / "annotations"
    annot_dir.mkdir(parents=True, exist_ok=True)
    entries, skipped = {}, []
    for i, image_id in enumerate(ids):
        if image_id not in dets:
            skipped.append(image_id)
            continue
        image = _load_rgb(cfg, image_id)
        external = {}
        if image_id in props:
            external["proposals"] = props[image_id]
        if cfg.dataset.prob_dir is not None:
            prob_path = cfg.dataset.path(cfg.dataset.prob_dir, image_id + ".pgm")
            if prob_path.exists():
                external["prob"] = load_prob_map(prob_path)
        mask = build_annotation(cfg.annotation, image, dets[image_id],
                                external, seed=cfg.seed + i)
        save_tristate(mask, annot_dir / f"{image_id}.pgm")
        entries[image_id] = hashlib.sha256(mask.tobytes()).hexdigest()
    manifest = {"variant": cfg.annotation.variant,
                "recipe": cfg.annotation.to_dict(),
                "seed": cfg.seed, "images": entries, "skipped": skipped}
    _atomic_json(manifest, annot_dir / "manifest.json")
    print(f"annotate: {len(entries)} masks, {len(skipped)} skipped -> {annot_dir}")
    return 0


def _training_annotation(cfg: PipelineConfig, out: Path, image_id: str,
                         index: int) -> np.ndarray:
    if cfg.forest.source == "annotations":
        return load_tristate(_require(out / "annotations" / f"{image_id}.pgm",
                                      "annotation (run annotate first)"))
    labels = _load_gt_labels(cfg, image_id)
    noise = cfg.noise
    if noise.jitter_sigma > 0 or noise.drop_rate > 0 or noise.spurious_rate > 0:
        rng = np.random.default_rng((cfg.seed, index))
        return boundary_tristate(corrupt_boundaries(labels, noise, rng))
    return boundary_tristate(clean_boundaries(labels))


def cmd_train(cfg: PipelineConfig, out: Path) -> int:
    ids = _read_split(cfg, cfg.dataset.train_split)
    skipped: set[str] = set()
    if cfg.forest.source == "annotations":
        manifest = out / "annotations" / "manifest.json"
        if manifest.is_file():
            skipped = set(json.loads(manifest.read_text()).get("skipped", []))

    def one(pair):
        i, image_id = pair
        image = _load_rgb(cfg, image_id)
        annot = _training_annotation(cfg, out, image_id, i)
        return sample_training_patches(image, annot, n_pos=cfg.forest.n_pos,
                                       n_neg=cfg.forest.n_neg, seed=cfg.seed + i)

    pairs = [(i, d) for i, d in enumerate(ids) if d not in skipped]
    parts = _pmap(one, pairs, cfg.jobs)
    samples = TrainingSamples.concat(parts)
    forest = train_forest(samples, n_trees=cfg.forest.n_trees,
                          max_depth=cfg.forest.max_depth,
                          min_leaf=cfg.forest.min_leaf, seed=cfg.seed,
                          n_feat=cfg.forest.n_feat, n_thresh=cfg.forest.n_thresh,
                          bootstrap_frac=cfg.forest.bootstrap_frac,
                          recipe_hash=cfg.digest())
    out.mkdir(parents=True, exist_ok=True)
    save_forest(forest, out / "model.sedf")
    _atomic_json({"n_images": len(pairs), "n_samples": len(samples),
                  "n_pos": samples.n_pos, "n_neg": samples.n_neg,
                  "missing_pos": samples.missing_pos,
                  "depths": [t.depth for t in forest.trees]},
                 out / "train_meta.json")
    print(f"train: {len(samples)} samples -> {out / 'model.sedf'}")
    return 0


def cmd_predict(cfg: PipelineConfig, out: Path) -> int:
    forest = load_forest(_require(out / "model.sedf", "model (run train first)"))
    ids = _read_split(cfg, cfg.dataset.test_split)
    pred_dir = out / "pred"
    pred_dir.mkdir(parents=True, exist_ok=True)

    def one(image_id):
        prob = predict(forest, _load_rgb(cfg, image_id), stride=cfg.forest.stride)
        save_prob_map(prob, pred_dir / f"{image_id}.pgm")

    _pmap(one, ids, cfg.jobs)
    print(f"predict: {len(ids)} maps -> {pred_dir}")
    return 0


def cmd_fuse(cfg: PipelineConfig, out: Path) -> int:
    ids = _read_split(cfg, cfg.dataset.test_split)
    det_path = cfg.dataset.path(cfg.dataset.detections)
    dets = _group_detections(det_path) if det_path.exists() else None
    fused_dir = out / "fused"
    fused_dir.mkdir(parents=True, exist_ok=True)
    for image_id in ids:
        prob = load_prob_map(_require(out / "pred" / f"{image_id}.pgm",
                                      "prediction (run predict first)"))
        h, w = prob.shape
        if dets is None:
            obj = np.full((h, w), cfg.fuse.floor)
        else:
            obj = objectness(dets.get(image_id, []), w, h, floor=cfg.fuse.floor)
        save_prob_map(fuse(prob, obj), fused_dir / f"{image_id}.pgm")
    print(f"fuse: {len(ids)} maps -> {fused_dir}")
    return 0


def cmd_eval(cfg: PipelineConfig, out: Path) -> int:
    ids = _read_split(cfg, cfg.dataset.test_split)
    pred_dir = out / cfg.eval.pred_dir
    preds, gts = [], []
    for image_id in ids:
        preds.append(load_prob_map(
            _require(pred_dir / f"{image_id}.pgm", "prediction map")))
        gts.append([clean_boundaries(_load_gt_labels(cfg, image_id)) > 0])
    summary = pr_curve(preds, gts, n_thresh=cfg.eval.n_thresh,
                       max_dist=cfg.eval.max_dist)

    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    with open(eval_dir / "per_image.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image", "threshold", "tp", "fp", "sum_r_tp", "sum_r_total"])
        for i, image_id in enumerate(ids):
            for k, t in enumerate(summary.thresholds):
                writer.writerow([image_id, f"{t:.6f}",
                                 *summary.image_counts[i, k].tolist()])
    with open(eval_dir / "pr_points.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "precision", "recall", "fscore"])
        for k, t in enumerate(summary.thresholds):
            writer.writerow([f"{t:.6f}", f"{summary.precision[k]:.8f}",
                             f"{summary.recall[k]:.8f}", f"{summary.fscore[k]:.8f}"])
    _atomic_json({"ods": round(summary.ods_f, 8),
                  "ods_threshold": round(summary.ods_threshold, 8),
                  "ois": round(summary.ois_f, 8),
                  "ap": round(summary.ap, 8),
                  "n_images": len(ids)},
                 eval_dir / "summary.json")
    print(f"eval: ODS {summary.ods_f:.4f} OIS {summary.ois_f:.4f} "
          f"AP {summary.ap:.4f} -> {eval_dir}")
    return 0


def cmd_report(cfg: PipelineConfig, out: Path) -> int:
    if not cfg.report:
        raise ConfigError("report: no methods configured")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    rows, curves = [], []
    for method in cfg.report:
        eval_dir = Path(method.eval_dir)
        summary = json.loads(
            _require(eval_dir / "summary.json", "eval summary").read_text())
        points = list(csv.DictReader(
            open(_require(eval_dir / "pr_points.csv", "PR points"))))
        rows.append([method.name, summary["ods"], summary["ois"], summary["ap"]])
        recall = [float(p["recall"]) for p in points]
        precision = [float(p["precision"]) for p in points]
        curves.append((method.name, recall, precision, summary["ap"]))

    with open(report_dir / "comparison.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "ods", "ois", "ap"])
        writer.writerows(rows)

    for name, recall, precision, ap in curves:
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.plot(recall, precision, "-o", markersize=2)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_title(f"{name} (AP {ap:.3f})")
        ax.grid(True, alpha=0.3)
        fig.savefig(report_dir / f"{name}_pr.png", dpi=120)
        plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 5))
    for name, recall, precision, ap in curves:
        ax.plot(recall, precision, label=f"{name} (AP {ap:.3f})")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="lower left", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.savefig(report_dir / "pr_curves.png", dpi=120)
    plt.close(fig)
    print(f"report: {len(rows)} methods -> {report_dir}")
    return 0


def cmd_model_inspect(cfg: PipelineConfig, out: Path) -> int:
    info = inspect_forest(_require(out / "model.sedf", "model file"))
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "annotate": cmd_annotate,
    "train": cmd_train,
    "predict": cmd_predict,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "report": cmd_report,
    "synth": cmd_synth,
    "model-inspect": cmd_model_inspect,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="weakbound",
        description="Weakly supervised object boundary pipeline.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override seed")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel workers (0 = all CPUs)")
    parser.add_argument("--out", default=None, help="override output directory")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.jobs is not None:
            if args.jobs < 0:
                raise ConfigError("--jobs must be non-negative")
            overrides["jobs"] = args.jobs
        if args.out is not None:
            overrides["out"] = args.out
        if overrides:
            import dataclasses
            cfg = dataclasses.replace(cfg, **overrides)
        out = Path(cfg.out)
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except VersionError as e:
        print(f"version error: {e}", file=sys.stderr)
        return 4
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except WeakboundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
