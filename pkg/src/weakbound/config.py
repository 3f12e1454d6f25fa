"""Pipeline configuration: a JSON file validated into nested dataclasses.

Every threshold the pipeline depends on (detection score cut, acceptance
IoUs, consensus agreement, boundary quantile, matching tolerance) is an
explicit knob here, so runs are auditable from the config alone.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .annot import AnnotationRecipe
from .errors import ConfigError
from .segment import FhParams
from .synth import NoiseParams, SynthConfig


@dataclass(frozen=True)
class DatasetConfig:
    """Filesystem layout of one dataset tree."""

    root: str = "."
    images_dir: str = "images"
    gt_dir: str = "gt"
    detections: str = "detections.jsonl"
    train_split: str = "train.txt"
    test_split: str = "test.txt"
    proposals: str | None = None     # external proposal JSONL, keyed by image
    prob_dir: str | None = None      # external boundary probability maps

    def path(self, *parts) -> Path:
        return Path(self.root).joinpath(*parts)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 8
    max_depth: int = 64
    min_leaf: int = 8
    n_feat: int = 256
    n_thresh: int = 8
    bootstrap_frac: float = 1.0
    n_pos: int = 200          # per training image
    n_neg: int = 200
    stride: int = 2
    source: str = "annotations"   # or "gt": train straight off instance masks

    def __post_init__(self):
        if self.source not in ("annotations", "gt"):
            raise ConfigError(f"unknown training source {self.source!r}")
        for name in ("n_trees", "max_depth", "min_leaf", "n_pos", "n_neg", "stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"forest.{name} must be >= 1")


@dataclass(frozen=True)
class FuseConfig:
    floor: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.floor <= 1.0:
            raise ConfigError(f"fuse.floor {self.floor} outside [0,1]")


@dataclass(frozen=True)
class EvalConfig:
    max_dist: float = 0.01
    n_thresh: int = 99
    pred_dir: str = "pred"    # which stage output to score ("pred" or "fused")

    def __post_init__(self):
        if not 0.0 < self.max_dist < 1.0:
            raise ConfigError(f"eval.max_dist {self.max_dist} outside (0,1)")
        if self.n_thresh < 1:
            raise ConfigError("eval.n_thresh must be >= 1")


@dataclass(frozen=True)
class ReportMethod:
    name: str
    eval_dir: str


@dataclass(frozen=True)
class PipelineConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    annotation: AnnotationRecipe = field(
        default_factory=lambda: AnnotationRecipe("FH_BBS"))
    forest: ForestConfig = field(default_factory=ForestConfig)
    fuse: FuseConfig = field(default_factory=FuseConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    noise: NoiseParams = field(default_factory=NoiseParams)
    report: tuple = ()
    seed: int = 0
    jobs: int = 0             # 0 = all logical CPUs
    out: str = "out"

    def digest(self) -> bytes:
        """Stable 32-byte hash of the pipeline-relevant config.

        Runtime plumbing (output directory, worker count, report layout)
        is excluded so reruns elsewhere produce identical model files.
        """
        d = {k: v for k, v in to_dict(self).items()
             if k not in ("out", "jobs", "report")}
        payload = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(payload).digest()


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


def _build(cls, data: dict, ctx: str):
    """Instantiate a dataclass from a plain dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{ctx}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        if f.name == "fh" or f.type == "FhParams":
            value = _build(FhParams, value, f"{ctx}.{name}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{ctx}: {e}")


_SECTIONS = {
    "dataset": DatasetConfig,
    "annotation": AnnotationRecipe,
    "forest": ForestConfig,
    "fuse": FuseConfig,
    "eval": EvalConfig,
    "synth": SynthConfig,
    "noise": NoiseParams,
}


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(data) - set(_SECTIONS) - {"report", "seed", "jobs", "out"}
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    if "report" in data:
        methods = data["report"]
        if not isinstance(methods, list):
            raise ConfigError("report must be a list of {name, eval_dir}")
        kwargs["report"] = tuple(
            _build(ReportMethod, m, f"report[{i}]") for i, m in enumerate(methods))
    for name in ("seed", "jobs", "out"):
        if name in data:
            kwargs[name] = data[name]
    if not isinstance(kwargs.get("seed", 0), int):
        raise ConfigError("seed must be an integer")
    if not isinstance(kwargs.get("jobs", 0), int) or kwargs.get("jobs", 0) < 0:
        raise ConfigError("jobs must be a non-negative integer")
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")
    return config_from_dict(data)
