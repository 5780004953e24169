"""Exact tracking of warm-up items and assembly of calibration pairs.

The first chunk of the stream (the warm-up) is counted exactly.  While the
rest of the stream is being sketched, occurrences of warm-up items are also
counted exactly ("supervised" counts).  Each warm-up stream position then
yields one supervised example: the frozen sketch's upper bound for that
item, labeled with the item's exact count among the sketched portion.
Repeated warm-up items yield repeated pairs on purpose; the guarantee the
pairs feed is per stream position, not per distinct item.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CalibrationPair:
    """One supervised example: sketch upper bound vs exact count."""

    item: str
    feature: int  # deterministic upper bound from the frozen sketch
    label: int    # exact count among the sketched portion


class ExactTracker:
    """Warm-up counts, supervised counts, and the warm-up sequence.

    Memory is proportional to the warm-up length, never to the size of the
    item universe.
    """

    def __init__(self) -> None:
        self.warmup_counts: dict[str, int] = {}
        self.supervised_counts: dict[str, int] = {}
        self.warmup_sequence: list[str] = []
        self.warmup_closed = False

    @property
    def warmup_size(self) -> int:
        return len(self.warmup_sequence)

    def warmup_ingest(self, item: str) -> None:
        """Count one warm-up observation exactly."""
        if self.warmup_closed:
            raise RuntimeError("warm-up phase already closed")
        self.warmup_counts[item] = self.warmup_counts.get(item, 0) + 1
        self.warmup_sequence.append(item)

    def close_warmup(self) -> None:
        self.warmup_closed = True

    def supervised_ingest(self, item: str) -> None:
        """Count a sketched-phase observation iff the item was seen in warm-up."""
        if not self.warmup_closed:
            raise RuntimeError("close_warmup() must be called before the sketched phase")
        if self.warmup_counts.get(item, 0) > 0:
            self.supervised_counts[item] = self.supervised_counts.get(item, 0) + 1

    def warmup_count(self, item: str) -> int:
        return self.warmup_counts.get(item, 0)

    def supervised_count(self, item: str) -> int:
        return self.supervised_counts.get(item, 0)

    def build_calibration_set(self, sketch, train_fraction: float = 0.0,
                              ) -> tuple[list[CalibrationPair], list[CalibrationPair]]:
        """Split per-position pairs into (training, calibration) by stream order.

        train_fraction 0 sends every pair to calibration (fixed-rule mode).
        """
        if not sketch.frozen:
            raise RuntimeError("sketch must be frozen before building calibration pairs")
        if not 0.0 <= train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in [0, 1), got {train_fraction}")
        features = {item: sketch.query_upper(item) for item in self.warmup_counts}
        pairs = [
            CalibrationPair(item, features[item], self.supervised_counts.get(item, 0))
            for item in self.warmup_sequence
        ]
        n_train = int(train_fraction * len(pairs))
        train, calib = pairs[:n_train], pairs[n_train:]
        if not calib:
            raise ValueError("calibration split is empty; track a warm-up first")
        return train, calib

    # -- persistence ------------------------------------------------------
    #
    # Line-oriented text, one distinct item per line in first-seen order:
    #   item TAB warmup_count TAB supervised_count
    # Loading reconstructs the warm-up sequence with each item's occurrences
    # grouped in file order, which is deterministic but differs from the
    # original interleaving; only the train/calibration boundary can differ.

    def to_text(self) -> str:
        seen: dict[str, None] = {}
        for item in self.warmup_sequence:
            seen.setdefault(item)
        lines = []
        for item in seen:
            if "\t" in item or "\n" in item:
                raise ValueError(f"item not serializable (tab/newline): {item!r}")
            lines.append(
                f"{item}\t{self.warmup_counts[item]}\t{self.supervised_counts.get(item, 0)}")
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_text(cls, text: str) -> "ExactTracker":
        tracker = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"tracker line {lineno}: expected 3 tab-separated fields")
            item, wu, sv = fields[0], int(fields[1]), int(fields[2])
            tracker.warmup_counts[item] = wu
            tracker.warmup_sequence.extend([item] * wu)
            if sv:
                tracker.supervised_counts[item] = sv
        tracker.warmup_closed = True
        return tracker

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "ExactTracker":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())
