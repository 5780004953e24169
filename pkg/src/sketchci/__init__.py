"""Streaming frequency sketches with conformal confidence intervals."""

from .conformal import (
    ADAPTIVE_LOWER,
    FIXED_LOWER,
    FIXED_UPPER,
    AdaptiveLowerRule,
    CalibratedThreshold,
    ConfidenceInterval,
    FixedLowerRule,
    FixedUpperRule,
    FrequencyPartition,
    ResidualQuantileModel,
    adaptive_lower,
    build_partition,
    calibrate,
    conformity_score,
    fixed_lower,
    predict_interval,
    score_pairs,
    two_sided_interval,
)
from .datagen import StreamSpec, ingest_file, pitman_yor_stream, zipf_stream
from .estimator import ConformalFrequencyEstimator, validate_tokens
from .harness import (
    ExperimentConfig,
    MetricsRow,
    load_config,
    parse_config,
    run_experiment,
    run_repetition,
    stratified_metrics,
    unique_query_metrics,
    write_csv,
)
from .hashing import HashFamily, digest64
from .rng import SplitMix64
from .sketch import CountMinSketch, classical_lower_bound
from .tracker import CalibrationPair, ExactTracker

__version__ = "0.1.0"

__all__ = [
    "ADAPTIVE_LOWER",
    "FIXED_LOWER",
    "FIXED_UPPER",
    "AdaptiveLowerRule",
    "CalibratedThreshold",
    "CalibrationPair",
    "ConfidenceInterval",
    "ConformalFrequencyEstimator",
    "CountMinSketch",
    "ExactTracker",
    "ExperimentConfig",
    "FixedLowerRule",
    "FixedUpperRule",
    "FrequencyPartition",
    "HashFamily",
    "MetricsRow",
    "ResidualQuantileModel",
    "SplitMix64",
    "StreamSpec",
    "adaptive_lower",
    "build_partition",
    "calibrate",
    "classical_lower_bound",
    "conformity_score",
    "digest64",
    "fixed_lower",
    "ingest_file",
    "load_config",
    "parse_config",
    "pitman_yor_stream",
    "predict_interval",
    "run_experiment",
    "run_repetition",
    "score_pairs",
    "stratified_metrics",
    "two_sided_interval",
    "unique_query_metrics",
    "validate_tokens",
    "write_csv",
    "zipf_stream",
]
