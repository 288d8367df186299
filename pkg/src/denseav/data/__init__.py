"""Annotations, feature files, splitting, statistics and synthetic corpora."""

from .features import (
    FeatureStreams,
    load_features,
    pad_and_mask,
    read_feature_file,
    write_feature_file,
)
from .schema import (
    AnnotatedVideo,
    DatasetIndex,
    EventInstance,
    Taxonomy,
    load_and_validate,
    parse_annotations,
)
from .split import apply_split, iterative_stratification, stratified_split
from .stats import duration_histogram, npmi_pairs, overlap_rate, repetition_rates
from .synthetic import SyntheticSpec, generate_synthetic, write_corpus

__all__ = [
    "AnnotatedVideo",
    "DatasetIndex",
    "EventInstance",
    "FeatureStreams",
    "SyntheticSpec",
    "Taxonomy",
    "apply_split",
    "duration_histogram",
    "generate_synthetic",
    "iterative_stratification",
    "load_and_validate",
    "load_features",
    "npmi_pairs",
    "overlap_rate",
    "pad_and_mask",
    "parse_annotations",
    "read_feature_file",
    "repetition_rates",
    "stratified_split",
    "write_corpus",
    "write_feature_file",
]
