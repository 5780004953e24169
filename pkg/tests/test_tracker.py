from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from sketchci.datagen import zipf_stream
from sketchci.hashing import HashFamily
from sketchci.sketch import CountMinSketch
from sketchci.tracker import ExactTracker


def build_tracked(stream, m0, d=2, w=64, seed=0, variant="cu"):
    sketch = CountMinSketch(HashFamily(d, w, seed), variant=variant)
    tracker = ExactTracker()
    for z in stream[:m0]:
        tracker.warmup_ingest(z)
    tracker.close_warmup()
    for z in stream[m0:]:
        sketch.update(z)
        tracker.supervised_ingest(z)
    sketch.freeze()
    return sketch, tracker


def test_warmup_counting():
    tracker = ExactTracker()
    for z in ["a", "b", "a"]:
        tracker.warmup_ingest(z)
    assert tracker.warmup_counts == {"a": 2, "b": 1}
    assert tracker.warmup_sequence == ["a", "b", "a"]


def test_empty_warmup():
    tracker = ExactTracker()
    tracker.close_warmup()
    assert tracker.warmup_counts == {}
    assert tracker.warmup_size == 0


def test_warmup_after_close_is_usage_error():
    tracker = ExactTracker()
    tracker.close_warmup()
    with pytest.raises(RuntimeError):
        tracker.warmup_ingest("a")


def test_supervised_before_close_is_usage_error():
    tracker = ExactTracker()
    with pytest.raises(RuntimeError):
        tracker.supervised_ingest("a")


def test_supervised_filters_unknown_items():
    tracker = ExactTracker()
    tracker.warmup_ingest("a")
    tracker.close_warmup()
    for z in ["a", "b", "a"]:
        tracker.supervised_ingest(z)
    assert tracker.supervised_counts == {"a": 2}
    assert tracker.supervised_count("b") == 0


def test_no_overlap_means_empty_supervised():
    tracker = ExactTracker()
    tracker.warmup_ingest("a")
    tracker.close_warmup()
    for z in ["x", "y"]:
        tracker.supervised_ingest(z)
    assert tracker.supervised_counts == {}


def test_zipf_warmup_mass_conservation():
    tracker = ExactTracker()
    for z in zipf_stream(1.5, 5000, seed=4):
        tracker.warmup_ingest(z)
    assert sum(tracker.warmup_counts.values()) == 5000


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from("abcdefgh"), min_size=2, max_size=120),
       st.integers(0, 999))
def test_split_counts_reconstruct_totals(stream, seed):
    m0 = max(1, len(stream) // 3)
    _, tracker = build_tracked(stream, m0, seed=seed)
    total = Counter(stream)
    for z in tracker.warmup_counts:
        assert tracker.warmup_count(z) + tracker.supervised_count(z) == total[z]


def test_calibration_split_by_stream_position():
    stream = ["a", "b", "a", "c", "b", "a"]
    sketch, tracker = build_tracked(stream, 4)
    train, calib = tracker.build_calibration_set(sketch, train_fraction=0.5)
    assert [p.item for p in train] == ["a", "b"]
    assert [p.item for p in calib] == ["a", "c"]
    # repeated warm-up items yield pairs with identical labels
    assert train[0].label == calib[0].label == tracker.supervised_count("a")
    assert train[0].feature == calib[0].feature


def test_zero_train_fraction_sends_everything_to_calibration():
    stream = ["a", "b", "a", "c"]
    sketch, tracker = build_tracked(stream, 3)
    train, calib = tracker.build_calibration_set(sketch, train_fraction=0.0)
    assert train == []
    assert len(calib) == 3


def test_split_errors():
    stream = ["a", "b", "a", "c"]
    sketch, tracker = build_tracked(stream, 2)
    with pytest.raises(ValueError):
        tracker.build_calibration_set(sketch, train_fraction=1.0)
    unfrozen = CountMinSketch(HashFamily(2, 8, 0))
    with pytest.raises(RuntimeError):
        tracker.build_calibration_set(unfrozen)
    empty_sketch, empty_tracker = build_tracked([], 0)
    with pytest.raises(ValueError):
        empty_tracker.build_calibration_set(empty_sketch)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from("abcde"), min_size=4, max_size=150),
       st.integers(0, 999))
def test_pair_dominance(stream, seed):
    m0 = len(stream) // 2
    sketch, tracker = build_tracked(stream, m0, seed=seed)
    _, calib = tracker.build_calibration_set(sketch, 0.0)
    for pair in calib:
        assert pair.feature >= pair.label >= 0


def test_text_round_trip(tmp_path):
    stream = ["a", "b", "a", "c", "b", "a", "d"]
    _, tracker = build_tracked(stream, 5)
    path = tmp_path / "tracker.tsv"
    tracker.save(path)
    back = ExactTracker.load(path)
    assert back.warmup_counts == tracker.warmup_counts
    assert back.supervised_counts == tracker.supervised_counts
    assert back.warmup_closed
    # order is grouped by first appearance, multiplicities preserved
    assert sorted(back.warmup_sequence) == sorted(tracker.warmup_sequence)
    assert back.warmup_sequence[:2] == ["a", "a"]


def test_serialization_rejects_tab_in_item():
    tracker = ExactTracker()
    tracker.warmup_ingest("bad\titem")
    with pytest.raises(ValueError):
        tracker.to_text()


def test_from_text_rejects_malformed_lines():
    with pytest.raises(ValueError):
        ExactTracker.from_text("only-two\t3\n")
