"""Weakly supervised object boundary annotation and detection toolkit."""

__version__ = "0.1.0"

from .errors import (ConfigError, DataError, FormatError, ParameterError,
                     ValidationError, VersionError, WeakboundError)
from .raster import (IGNORE, NEGATIVE, POSITIVE, DetectionBox, Rect,
                     filter_detections, iou)
from .segment import FhParams, SegmentLabeling, fh_segment, labeling_boundaries
from .canny import canny
from .maxflow import max_flow
from .grabcut import GrabCutResult, grabcut, grabcut_annotation
from .proposals import (Proposal, SimilarityWeights, consensus_boundaries,
                        match_proposals, selective_search, union_boundaries)
from .annot import VARIANTS, AnnotationRecipe, build_annotation, quantile_mask
from .forest import (EdgeForest, TrainingSamples, inspect_forest, load_forest,
                     predict, sample_training_patches, save_forest,
                     train_forest)
from .fusion import fuse, objectness
from .bench import (MatchCounts, PrSummary, correspond, nms_thin, pr_curve,
                    sbd_eval)
from .synth import NoiseParams, SynthConfig, gen_synthetic
from .config import PipelineConfig, load_config

__all__ = [
    "__version__",
    "WeakboundError", "ConfigError", "DataError", "FormatError",
    "ValidationError", "ParameterError", "VersionError",
    "Rect", "DetectionBox", "iou", "filter_detections",
    "NEGATIVE", "IGNORE", "POSITIVE",
    "FhParams", "SegmentLabeling", "fh_segment", "labeling_boundaries",
    "canny", "max_flow",
    "GrabCutResult", "grabcut", "grabcut_annotation",
    "Proposal", "SimilarityWeights", "selective_search", "match_proposals",
    "union_boundaries", "consensus_boundaries",
    "VARIANTS", "AnnotationRecipe", "build_annotation", "quantile_mask",
    "EdgeForest", "TrainingSamples", "sample_training_patches",
    "train_forest", "predict", "save_forest", "load_forest", "inspect_forest",
    "objectness", "fuse",
    "MatchCounts", "PrSummary", "nms_thin", "correspond", "pr_curve",
    "sbd_eval",
    "SynthConfig", "NoiseParams", "gen_synthetic",
    "PipelineConfig", "load_config",
]
