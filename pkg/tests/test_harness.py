import csv
import io
import math

import pytest

from sketchci.conformal import FrequencyPartition
from sketchci.datagen import StreamSpec
from sketchci.harness import (
    METHOD_ADAPTIVE,
    METHOD_CLASSICAL,
    METHOD_FIXED,
    METHOD_TWO_SIDED,
    ExperimentConfig,
    parse_config,
    rows_to_csv,
    run_experiment,
    run_repetition,
    stratified_metrics,
    unique_query_metrics,
    write_csv,
)

SMALL = ExperimentConfig(
    stream=StreamSpec(source="zipf", zipf_a=1.5, m=4000, m0=400,
                      query_count=600, seed=0),
    variant="cu", d=3, w=256, master_seed=33, alpha=0.1, bins=3,
    train_fraction=0.5, two_sided=True, repetitions=2, output="unused.csv")


@pytest.fixture(scope="module")
def small_rows():
    return run_experiment(SMALL)


def test_defaults_match_protocol():
    config = parse_config("")
    assert (config.d, config.w) == (3, 1000)
    assert (config.stream.m, config.stream.m0) == (100_000, 5_000)
    assert config.stream.query_count == 10_000
    assert config.bins == 5
    assert config.repetitions == 10
    assert config.alpha == 0.05


def test_parse_config_overrides_and_comments():
    text = """
    # comment
    source = pitman_yor
    py_sigma = 0.25   # inline comment
    m = 1000
    m0 = 100
    two_sided = yes
    alpha = 0.2
    """
    config = parse_config(text)
    assert config.stream.source == "pitman_yor"
    assert config.stream.py_sigma == 0.25
    assert config.two_sided is True
    assert config.alpha == 0.2


def test_parse_config_rejects_bad_input():
    with pytest.raises(ValueError):
        parse_config("mystery_key = 1\nm = 100\nm0 = 10")
    with pytest.raises(ValueError):
        parse_config("two_sided = maybe")
    with pytest.raises(ValueError):
        parse_config("just a line")
    with pytest.raises(ValueError):
        parse_config("m = 100\nm0 = 100")  # infeasible split
    with pytest.raises(ValueError):
        parse_config("w = 0")
    with pytest.raises(ValueError):
        parse_config("alpha = 0")


def test_repetition_emits_all_methods(small_rows):
    methods = {r.method for r in small_rows}
    assert methods == {METHOD_FIXED, METHOD_ADAPTIVE, METHOD_CLASSICAL,
                       METHOD_TWO_SIDED}
    assert len(small_rows) == 4 * SMALL.repetitions
    for row in small_rows:
        assert row.n_queries == SMALL.stream.query_count
        assert 0.0 <= row.coverage <= 1.0
        assert row.mean_length >= 0.0


def test_per_bin_counts_conserve_queries(small_rows):
    for row in small_rows:
        assert sum(b.count for b in row.per_bin) == row.n_queries
        weighted = sum(b.count * b.coverage for b in row.per_bin if b.count)
        assert weighted / row.n_queries == pytest.approx(row.coverage)


def test_classical_length_respects_error_bound(small_rows):
    m_sketched = SMALL.stream.m - SMALL.stream.m0
    cap = math.ceil(math.e * m_sketched / SMALL.w)
    for row in small_rows:
        if row.method == METHOD_CLASSICAL:
            assert row.mean_length <= cap
            for b in row.per_bin:
                if b.count:
                    assert b.mean_length <= cap


def test_alpha_to_zero_limit_saturates_coverage():
    config = ExperimentConfig(
        stream=StreamSpec(source="zipf", zipf_a=1.5, m=2000, m0=150,
                          query_count=300),
        variant="cu", d=2, w=128, master_seed=1, alpha=1e-6, bins=1,
        repetitions=1)
    rows = run_repetition(config, 0)
    for row in rows:
        if row.method in (METHOD_FIXED, METHOD_ADAPTIVE):
            assert row.coverage == 1.0


def test_stratified_metrics_identities():
    part = FrequencyPartition([0, 10])
    bins = stratified_metrics([1, 2, 3], [True, True, False], [5, 5, 2], part)
    assert len(bins) == 1
    assert bins[0].count == 3
    assert bins[0].coverage == pytest.approx(2 / 3)

    part2 = FrequencyPartition([0, 5, 10])
    bins2 = stratified_metrics([1, 1, 7, 7], [True, True, True, False],
                               [1, 1, 1, 1], part2)
    assert [b.coverage for b in bins2] == [1.0, 0.5]
    marginal = sum(b.count * b.coverage for b in bins2) / 4
    assert marginal == pytest.approx(0.75)

    empty = stratified_metrics([7], [True], [1], part2)
    assert empty[0].count == 0
    assert empty[0].coverage is None


def test_unique_query_metrics_dedup():
    tokens = ["a"] * 100 + ["b"]
    covered = [True] * 100 + [False]
    n, cov = unique_query_metrics(tokens, covered)
    assert n == 2
    assert cov == 0.5
    assert unique_query_metrics([], []) == (0, 0.0)


def test_csv_is_deterministic_and_parseable(small_rows):
    text_a = rows_to_csv(SMALL, small_rows)
    text_b = rows_to_csv(SMALL, run_experiment(SMALL))
    assert text_a == text_b
    reader = csv.DictReader(io.StringIO(text_a))
    records = list(reader)
    assert len(records) == len(small_rows)
    first = records[0]
    assert first["schema"] == "sketchci-metrics-v1"
    assert first["rng"] == "splitmix64"
    assert first["m"] == "4000"
    assert int(first["bin0_count"]) + int(first["bin1_count"]) + int(
        first["bin2_count"]) == 600


def test_parallel_workers_match_serial(small_rows):
    rows = run_experiment(SMALL, workers=2)
    assert rows_to_csv(SMALL, rows) == rows_to_csv(SMALL, small_rows)


def test_write_csv_roundtrip(tmp_path, small_rows):
    path = tmp_path / "out.csv"
    text = write_csv(SMALL, small_rows, path=path)
    assert path.read_text(encoding="utf-8") == text


def test_seeds_recorded_per_repetition(small_rows):
    for row in small_rows:
        assert row.stream_seed == SMALL.master_seed + 2 * row.repetition
        assert row.hash_seed == row.stream_seed + 1
