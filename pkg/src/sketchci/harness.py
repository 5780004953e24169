"""End-to-end experiment pipeline: stream, sketch, calibrate, evaluate.

For each repetition the harness generates a fresh stream plus queries,
runs the warm-up / sketch / calibrate pipeline, answers every query with
each enabled method, and scores the answers against a brute-force exact
counter (feasible at these scales; production users have no such oracle).
Methods within a repetition share the stream and the sketch, so method
comparisons are paired.  Results land in an RFC-4180 CSV with one row per
method and repetition; the full configuration is echoed into every row so
a results file is self-describing.

Seeds: repetition r uses stream seed master_seed + 2r and hash seed
master_seed + 2r + 1, so both the data and the hash functions are redrawn
independently each repetition.
"""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import conformal
from .datagen import StreamSpec
from .hashing import HashFamily
from .sketch import VARIANT_CMS, VARIANT_CU, CountMinSketch, classical_lower_bound
from .tracker import ExactTracker

CSV_SCHEMA = "sketchci-metrics-v1"
WORKERS_ENV = "SKETCHCI_WORKERS"

METHOD_FIXED = "conformal_fixed"
METHOD_ADAPTIVE = "conformal_adaptive"
METHOD_CLASSICAL = "classical"
METHOD_TWO_SIDED = "conformal_fixed_two_sided"


@dataclass
class ExperimentConfig:
    stream: StreamSpec = field(default_factory=StreamSpec)
    variant: str = VARIANT_CU
    d: int = 3
    w: int = 1000
    master_seed: int = 0
    alpha: float = 0.05
    bins: int = 5
    train_fraction: float = 0.5
    rule: str = conformal.FIXED_LOWER
    two_sided: bool = False
    repetitions: int = 10
    output: str = "metrics.csv"

    def validate(self) -> None:
        self.stream.validate()
        if self.variant not in (VARIANT_CMS, VARIANT_CU):
            raise ValueError(f"unknown sketch variant {self.variant!r}")
        if self.d < 1 or self.w < 1:
            raise ValueError(f"need d >= 1 and w >= 1, got d={self.d}, w={self.w}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")
        if not 0.0 <= self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in [0, 1), got {self.train_fraction}")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")


# ---------------------------------------------------------------------------
# config file: flat "key = value" lines, '#' starts a comment

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config(text: str) -> ExperimentConfig:
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ValueError(f"config line {lineno}: expected key = value")
        kv[key.strip()] = value.strip()

    def pop(key, cast, default):
        if key not in kv:
            return default
        raw = kv.pop(key)
        if cast is bool:
            try:
                return _BOOL[raw.lower()]
            except KeyError:
                raise ValueError(f"config key {key}: not a boolean: {raw!r}") from None
        return cast(raw)

    stream = StreamSpec(
        source=pop("source", str, StreamSpec.source),
        zipf_a=pop("zipf_a", float, StreamSpec.zipf_a),
        py_lambda=pop("py_lambda", float, StreamSpec.py_lambda),
        py_sigma=pop("py_sigma", float, StreamSpec.py_sigma),
        path=pop("path", str, None),
        m=pop("m", int, StreamSpec.m),
        m0=pop("m0", int, StreamSpec.m0),
        query_count=pop("query_count", int, StreamSpec.query_count),
        seed=pop("seed", int, StreamSpec.seed),
    )
    config = ExperimentConfig(
        stream=stream,
        variant=pop("variant", str, ExperimentConfig.variant),
        d=pop("d", int, ExperimentConfig.d),
        w=pop("w", int, ExperimentConfig.w),
        master_seed=pop("master_seed", int, ExperimentConfig.master_seed),
        alpha=pop("alpha", float, ExperimentConfig.alpha),
        bins=pop("bins", int, ExperimentConfig.bins),
        train_fraction=pop("train_fraction", float, ExperimentConfig.train_fraction),
        rule=pop("rule", str, ExperimentConfig.rule),
        two_sided=pop("two_sided", bool, ExperimentConfig.two_sided),
        repetitions=pop("repetitions", int, ExperimentConfig.repetitions),
        output=pop("output", str, ExperimentConfig.output),
    )
    if kv:
        raise ValueError(f"unknown config keys: {sorted(kv)}")
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# metrics


@dataclass
class BinMetrics:
    count: int
    coverage: float | None
    mean_length: float | None


@dataclass
class MetricsRow:
    method: str
    repetition: int
    stream_seed: int
    hash_seed: int
    n_queries: int
    coverage: float
    mean_length: float
    unique_count: int
    unique_coverage: float
    partition_edges: list[int]
    per_bin: list[BinMetrics]


def stratified_metrics(bin_values, covered, lengths,
                       partition: conformal.FrequencyPartition) -> list[BinMetrics]:
    """Coverage and mean length within each frequency bin.

    `bin_values` give each query's position on the partition's scale;
    empty bins are reported with count 0.
    """
    buckets: list[list[int]] = [[] for _ in range(partition.n_bins)]
    for i, value in enumerate(bin_values):
        buckets[partition.bin_of(value)].append(i)
    rows = []
    for idx in buckets:
        if not idx:
            rows.append(BinMetrics(0, None, None))
            continue
        rows.append(BinMetrics(
            count=len(idx),
            coverage=sum(covered[i] for i in idx) / len(idx),
            mean_length=sum(lengths[i] for i in idx) / len(idx),
        ))
    return rows


def unique_query_metrics(tokens, covered) -> tuple[int, float]:
    """Coverage over distinct query tokens (diagnostic only).

    The calibrated guarantee is per random query, duplicates included; the
    deduplicated rate can fall below 1 - alpha and is reported, not gated.
    """
    seen: dict[str, bool] = {}
    for token, cov in zip(tokens, covered):
        seen.setdefault(token, cov)
    n = len(seen)
    return n, (sum(seen.values()) / n if n else 0.0)


# ---------------------------------------------------------------------------
# single repetition


def run_repetition(config: ExperimentConfig, repetition: int) -> list[MetricsRow]:
    spec = config.stream
    stream_seed = config.master_seed + 2 * repetition
    hash_seed = config.master_seed + 2 * repetition + 1

    tokens = spec.generate(spec.m + spec.query_count, seed=stream_seed)
    stream, queries = tokens[:spec.m], tokens[spec.m:]
    exact = Counter(stream)

    family = HashFamily(config.d, config.w, hash_seed)
    sketch = CountMinSketch(family, variant=config.variant)
    tracker = ExactTracker()
    for token in stream[:spec.m0]:
        tracker.warmup_ingest(token)
    tracker.close_warmup()
    for token in stream[spec.m0:]:
        sketch.update(token)
        tracker.supervised_ingest(token)
    sketch.freeze()

    grid_max = spec.m
    _, all_pairs = tracker.build_calibration_set(sketch, 0.0)
    train_pairs, adaptive_calib = tracker.build_calibration_set(
        sketch, config.train_fraction)

    methods: dict[str, dict] = {}

    fixed_rule = conformal.FixedLowerRule(grid_max)
    fixed_partition = conformal.build_partition(
        [p.label for p in all_pairs], config.bins, grid_max)
    fixed_scores, fixed_labels = conformal.score_pairs(fixed_rule, all_pairs)
    methods[METHOD_FIXED] = {
        "partition": fixed_partition,
        "predict": _one_sided_predictor(
            sketch, tracker, fixed_rule,
            conformal.calibrate(fixed_scores, fixed_labels, fixed_partition,
                                config.alpha)),
    }

    model = conformal.ResidualQuantileModel().fit(train_pairs)
    adaptive_rule = conformal.AdaptiveLowerRule(model, grid_max)
    adaptive_partition = conformal.build_partition(
        [p.label for p in adaptive_calib], config.bins, grid_max)
    scores, labels = conformal.score_pairs(adaptive_rule, adaptive_calib)
    methods[METHOD_ADAPTIVE] = {
        "partition": adaptive_partition,
        "predict": _one_sided_predictor(
            sketch, tracker, adaptive_rule,
            conformal.calibrate(scores, labels, adaptive_partition, config.alpha)),
    }

    methods[METHOD_CLASSICAL] = {
        "partition": fixed_partition,
        "predict": _classical_predictor(sketch, tracker, config.alpha),
    }

    if config.two_sided:
        half = config.alpha / 2.0
        lower_thr = conformal.calibrate(fixed_scores, fixed_labels,
                                        fixed_partition, half)
        upper_rule = conformal.FixedUpperRule(grid_max)
        up_scores, up_labels = conformal.score_pairs(upper_rule, all_pairs)
        upper_thr = conformal.calibrate(up_scores, up_labels, fixed_partition, half)
        methods[METHOD_TWO_SIDED] = {
            "partition": fixed_partition,
            "predict": lambda z: conformal.two_sided_interval(
                z, sketch, tracker, fixed_rule, lower_thr, upper_rule, upper_thr),
        }

    rows = []
    for name, method in methods.items():
        intervals = [method["predict"](z) for z in queries]
        truths = [exact[z] for z in queries]
        covered = [ci.covers(t) for ci, t in zip(intervals, truths)]
        lengths = [ci.length for ci in intervals]
        # bins live on the sketched-portion scale, like the calibration labels
        sketched_truths = [t - tracker.warmup_count(z)
                           for z, t in zip(queries, truths)]
        partition = method["partition"]
        n_unique, unique_cov = unique_query_metrics(queries, covered)
        rows.append(MetricsRow(
            method=name,
            repetition=repetition,
            stream_seed=stream_seed,
            hash_seed=hash_seed,
            n_queries=len(queries),
            coverage=sum(covered) / len(covered),
            mean_length=sum(lengths) / len(lengths),
            unique_count=n_unique,
            unique_coverage=unique_cov,
            partition_edges=list(partition.edges),
            per_bin=stratified_metrics(sketched_truths, covered, lengths, partition),
        ))
    return rows


def _one_sided_predictor(sketch, tracker, rule, threshold):
    def predict(z):
        return conformal.predict_interval(z, sketch, tracker, rule, threshold)
    return predict


def _classical_predictor(sketch, tracker, alpha):
    m_sketched = sketch.total
    w = sketch.family.w

    def predict(z):
        offset = tracker.warmup_count(z)
        feature = sketch.query_upper(z)
        lower = offset + classical_lower_bound(feature, m_sketched, w)
        return conformal.ConfidenceInterval(lower, offset + feature, alpha, offset)
    return predict


# ---------------------------------------------------------------------------
# experiment driver and CSV output


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> list[MetricsRow]:
    """All repetitions, optionally in parallel; rows in deterministic order."""
    config.validate()
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    reps = range(config.repetitions)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_repetition, [config] * config.repetitions, reps))
    else:
        chunks = [run_repetition(config, r) for r in reps]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.repetition, r.method))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def rows_to_csv(config: ExperimentConfig, rows: list[MetricsRow]) -> str:
    """RFC-4180 text; the configuration is echoed into every row."""
    spec = config.stream
    header = [
        "schema", "method", "repetition", "stream_seed", "hash_seed",
        "source", "zipf_a", "py_lambda", "py_sigma", "m", "m0", "query_count",
        "variant", "d", "w", "master_seed", "alpha", "bins", "train_fraction",
        "rule", "two_sided", "rng", "n_queries", "coverage", "mean_length",
        "unique_count", "unique_coverage", "partition_edges",
    ]
    for l in range(config.bins):
        header += [f"bin{l}_count", f"bin{l}_coverage", f"bin{l}_mean_length"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        record = [
            CSV_SCHEMA, row.method, row.repetition, row.stream_seed, row.hash_seed,
            spec.source, _fmt(spec.zipf_a), _fmt(spec.py_lambda), _fmt(spec.py_sigma),
            spec.m, spec.m0, spec.query_count,
            config.variant, config.d, config.w, config.master_seed,
            _fmt(config.alpha), config.bins, _fmt(config.train_fraction),
            config.rule, str(config.two_sided).lower(), "splitmix64",
            row.n_queries, _fmt(row.coverage), _fmt(row.mean_length),
            row.unique_count, _fmt(row.unique_coverage),
            ";".join(str(e) for e in row.partition_edges),
        ]
        padded = list(row.per_bin) + [BinMetrics(0, None, None)] * (
            config.bins - len(row.per_bin))
        for bm in padded[:config.bins]:
            record += [bm.count, _fmt(bm.coverage), _fmt(bm.mean_length)]
        writer.writerow(record)
    return buf.getvalue()


def write_csv(config: ExperimentConfig, rows: list[MetricsRow], path=None) -> str:
    path = config.output if path is None else path
    text = rows_to_csv(config, rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text
