"""Weak-box panoptic mask synthesis and panoptic/instance/semantic evaluation."""

__version__ = "0.1.0"

from .core import (
    BinaryMask,
    BoxAnnotation,
    CategoryTable,
    ClassMetrics,
    GrayImage,
    MetricsRecord,
    PanopticMap,
    Segment,
    validate_panoptic,
)
from .experiment import DEFAULT_TAUS, aggregate, evaluate, kfold_split, sweep
from .matching import MatchConfig, MatchReport, iou, match_segments
from .metrics import average_precision, dice, panoptic_quality
from .synthesis import SynthesisConfig, build_panoptic, synthesize_segment

__all__ = [
    "BinaryMask",
    "BoxAnnotation",
    "CategoryTable",
    "ClassMetrics",
    "DEFAULT_TAUS",
    "GrayImage",
    "MatchConfig",
    "MatchReport",
    "MetricsRecord",
    "PanopticMap",
    "Segment",
    "SynthesisConfig",
    "aggregate",
    "average_precision",
    "build_panoptic",
    "dice",
    "evaluate",
    "iou",
    "kfold_split",
    "match_segments",
    "panoptic_quality",
    "sweep",
    "synthesize_segment",
    "validate_panoptic",
]
