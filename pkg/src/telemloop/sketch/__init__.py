"""Mergeable sketch primitives: count sketch, merged universal sketch, histograms."""

from .countsketch import CountSketch
from .histogram import KEY_SPACE, DimHistogram, ValueDomain, merge_histograms
from .reference import UniversalSketch
from .universal import (
    CARDINALITY,
    ENTROPY,
    L2,
    GsumKind,
    MergedUnivSketch,
    Sampler,
    SketchGeometry,
    diff_l2,
    merge,
    merge_all,
    moment,
)

__all__ = [
    "CARDINALITY",
    "ENTROPY",
    "KEY_SPACE",
    "L2",
    "CountSketch",
    "DimHistogram",
    "GsumKind",
    "MergedUnivSketch",
    "Sampler",
    "SketchGeometry",
    "UniversalSketch",
    "ValueDomain",
    "diff_l2",
    "merge",
    "merge_all",
    "merge_histograms",
    "moment",
]
