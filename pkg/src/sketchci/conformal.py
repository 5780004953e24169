"""Split-conformal calibration of sketch frequency queries.

The machinery is built around *nested rules*: families of candidate
intervals [lower(x; t), upper(x; t)] indexed by an integer t in
{0, ..., grid_max} that only widen as t grows, and that contain every
feasible count at t = grid_max.  The conformity score of a supervised
example is the smallest t whose candidate interval covers its exact count.
Calibration then picks one threshold per frequency bin, the
ceil((1 - alpha) * (n + 1))-th smallest score in the bin (or the
saturation index grid_max when that rank exceeds the bin size), and
combines bins conservatively by taking the maximum.  Querying with the
combined threshold yields intervals whose coverage holds marginally and
within each frequency bin, assuming only that queries are exchangeable
with the sketched stream.

Two lower-bound rules are provided: a fixed rule that shifts the sketch's
deterministic upper bound down by t, and an adaptive rule that shifts by
an estimated quantile of the overcount (upper bound minus exact count)
learned as a function of the upper bound.  A candidate-upper-bound rule
(min(t, upper bound)) supports two-sided intervals at level alpha via a
pair of one-sided calibrations at alpha / 2.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from .tracker import CalibrationPair

FIXED_LOWER = "fixed"
ADAPTIVE_LOWER = "adaptive"
FIXED_UPPER = "fixed_upper"


# ---------------------------------------------------------------------------
# frequency partition


class FrequencyPartition:
    """Contiguous integer bins covering {0, ..., grid_max}.

    `edges` has length n_bins + 1 with edges[0] == 0 and
    edges[-1] == grid_max; bin l covers [edges[l], edges[l+1]), except the
    last bin which is closed on the right.
    """

    def __init__(self, edges: list[int]) -> None:
        if len(edges) < 2 or edges[0] != 0:
            raise ValueError("edges must start at 0 and contain at least two points")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"edges must be strictly increasing, got {edges}")
        self.edges = [int(e) for e in edges]

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @property
    def grid_max(self) -> int:
        return self.edges[-1]

    def bin_of(self, value: int) -> int:
        if not 0 <= value <= self.grid_max:
            raise ValueError(f"value {value} outside [0, {self.grid_max}]")
        return min(bisect_right(self.edges, value) - 1, self.n_bins - 1)

    def __repr__(self) -> str:
        return f"FrequencyPartition({self.edges})"


def build_partition(labels, n_bins: int, grid_max: int) -> FrequencyPartition:
    """Equal-mass partition: cut points at the k/n_bins label quantiles.

    Cuts are order statistics (hence integers), deduplicated, and any cut
    whose left bin would contain no labels is dropped (the empty bin merges
    into its right neighbour).  Degenerate label sets therefore collapse to
    fewer effective bins; n_bins = 1 is the trivial marginal partition.
    """
    if n_bins < 1:
        raise ValueError(f"need at least one bin, got {n_bins}")
    labels = sorted(int(y) for y in labels)
    cuts = []
    n = len(labels)
    if n:
        for k in range(1, n_bins):
            rank = max(1, math.ceil(k / n_bins * n))
            cuts.append(labels[rank - 1])
    kept = []
    prev = 0
    for cut in sorted(set(cuts)):
        if cut <= prev or cut >= grid_max:
            continue
        if bisect_left(labels, cut) - bisect_left(labels, prev) > 0:
            kept.append(cut)
            prev = cut
    return FrequencyPartition([0] + kept + [grid_max])


# ---------------------------------------------------------------------------
# nested interval rules


class FixedLowerRule:
    """One-sided candidates [max(0, feature - t), feature]."""

    kind = FIXED_LOWER

    def __init__(self, grid_max: int) -> None:
        self.grid_max = grid_max

    def lower(self, feature: int, t: int) -> int:
        return max(0, feature - t)

    def upper(self, feature: int, t: int) -> int:
        return feature


class FixedUpperRule:
    """Candidates [0, min(t, feature)]: grow from zero, cap at the sketch bound."""

    kind = FIXED_UPPER

    def __init__(self, grid_max: int) -> None:
        self.grid_max = grid_max

    def lower(self, feature: int, t: int) -> int:
        return 0

    def upper(self, feature: int, t: int) -> int:
        return min(t, feature)


class AdaptiveLowerRule:
    """One-sided candidates [max(0, feature - shift(feature, t)), feature].

    The shift comes from a ResidualQuantileModel: the fitted quantile
    levels occupy t = 0 .. n_levels-1 of the integer grid (level 0 is the
    zero-shift boundary), and past the top fitted level the shift keeps
    growing by one per step until it saturates at grid_max, so the
    candidate family always reaches [0, feature] and residuals beyond the
    model's top quantile still get finite, informative indices.  Shifts
    are floored to keep endpoints integral.
    """

    kind = ADAPTIVE_LOWER

    def __init__(self, model: "ResidualQuantileModel", grid_max: int) -> None:
        if model is None:
            raise RuntimeError("adaptive rule requires a fitted model")
        self.model = model
        self.grid_max = grid_max

    def shift(self, feature: int, t: int) -> int:
        if t >= self.grid_max:
            return self.grid_max
        top = len(self.model.levels) - 1
        q = math.floor(self.model.quantile(feature, min(t, top)))
        if t > top:
            q += t - top
        return min(q, self.grid_max)

    def lower(self, feature: int, t: int) -> int:
        return max(0, feature - self.shift(feature, t))

    def upper(self, feature: int, t: int) -> int:
        return feature


def fixed_lower(feature: int, t: int) -> int:
    """Fixed-rule lower bound: the upper bound shifted down by t, floored at 0."""
    return max(0, feature - t)


def adaptive_lower(model: "ResidualQuantileModel", feature: int, t: int) -> int:
    """Adaptive lower bound: shift by the model's level-t overcount quantile."""
    if model is None:
        raise RuntimeError("model must be fitted before use")
    return max(0, feature - math.floor(model.quantile(feature, t)))


# ---------------------------------------------------------------------------
# adaptive residual model


def _pav_nondecreasing(values, weights):
    """Weighted L2 isotonic (non-decreasing) fit via pool-adjacent-violators."""
    blocks = []  # [weighted sum, weight, run length]
    for v, w in zip(values, weights):
        blocks.append([v * w, w, 1])
        while len(blocks) > 1 and blocks[-2][0] * blocks[-1][1] > blocks[-1][0] * blocks[-2][1]:
            wy, w2, n2 = blocks.pop()
            blocks[-1][0] += wy
            blocks[-1][1] += w2
            blocks[-1][2] += n2
    out = []
    for wy, w, n in blocks:
        out.extend([wy / w] * n)
    return out


class ResidualQuantileModel:
    """Binned empirical quantiles of the sketch overcount, monotone both ways.

    Training examples are (upper bound, exact count) pairs; the modeled
    residual is upper bound minus exact count.  Features are grouped into
    equal-mass bins, each bin gets empirical residual quantiles on an
    evenly spaced level grid (level 0 pinned to 0), and the per-level
    curves are made non-decreasing across feature bins by
    pool-adjacent-violators.  Quantiles are non-decreasing in the level by
    construction (order statistics of one sample), which PAV preserves.
    """

    def __init__(self, n_levels: int = 101, n_feature_bins: int = 10,
                 levels=None) -> None:
        if levels is not None:
            self.levels = [float(l) for l in levels]
            if self.levels[0] != 0.0:
                # index 0 of the grid is always the zero-shift boundary
                self.levels.insert(0, 0.0)
        else:
            if n_levels < 2:
                raise ValueError("need at least two quantile levels")
            self.levels = [s / (n_levels - 1) for s in range(n_levels)]
        self.n_feature_bins = n_feature_bins
        self.feature_cuts: list[int] = []
        self.table: np.ndarray | None = None  # (n_bins, n_levels)

    def fit(self, pairs: list[CalibrationPair]) -> "ResidualQuantileModel":
        if not pairs:
            raise ValueError("adaptive model needs at least one training pair")
        feats = sorted(p.feature for p in pairs)
        n = len(feats)
        cuts, prev = [], feats[0]
        for k in range(1, self.n_feature_bins):
            cut = feats[max(1, math.ceil(k / self.n_feature_bins * n)) - 1]
            # keep a cut only if its left bin captures at least one feature
            if cut > prev:
                cuts.append(cut)
                prev = cut
        self.feature_cuts = cuts
        binned: list[list[int]] = [[] for _ in range(len(cuts) + 1)]
        for p in pairs:
            binned[self._bin_of(p.feature)].append(p.feature - p.label)
        table = np.zeros((len(binned), len(self.levels)))
        weights = [len(b) for b in binned]
        for bi, residuals in enumerate(binned):
            residuals.sort()
            for si, tau in enumerate(self.levels):
                table[bi, si] = _order_stat_quantile(residuals, tau)
        for si in range(len(self.levels)):
            table[:, si] = _pav_nondecreasing(table[:, si], weights)
        np.maximum.accumulate(table, axis=1, out=table)
        self.table = table
        return self

    def _bin_of(self, feature: int) -> int:
        return bisect_right(self.feature_cuts, feature)

    def quantile(self, feature: int, t: int) -> float:
        """Residual quantile for level index t (indices past the grid clamp)."""
        if self.table is None:
            raise RuntimeError("model must be fitted before use")
        s = min(max(t, 0), len(self.levels) - 1)
        return float(self.table[self._bin_of(feature), s])


def _order_stat_quantile(sorted_vals: list[int], tau: float) -> float:
    """ceil(tau * n)-th smallest value; level 0 is pinned to 0."""
    if tau <= 0.0 or not sorted_vals:
        return 0.0
    k = min(max(math.ceil(tau * len(sorted_vals)), 1), len(sorted_vals))
    return float(sorted_vals[k - 1])


# ---------------------------------------------------------------------------
# conformity scores and calibration


def conformity_score(rule, feature: int, label: int) -> int:
    """Smallest index t whose candidate interval covers the label.

    Binary search over {0, ..., grid_max}; valid because the candidate
    intervals are nested in t.
    """
    lo, hi = 0, rule.grid_max
    if not rule.lower(feature, hi) <= label <= rule.upper(feature, hi):
        raise ValueError(
            f"label {label} not covered even at saturation (feature {feature})")
    while lo < hi:
        mid = (lo + hi) // 2
        if rule.lower(feature, mid) <= label <= rule.upper(feature, mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


@dataclass
class CalibratedThreshold:
    """Per-bin conformal quantiles and their conservative combination."""

    alpha: float
    grid_max: int
    partition: FrequencyPartition
    bin_counts: list[int]
    bin_thresholds: list[int]
    q_star: int = field(init=False)

    def __post_init__(self) -> None:
        self.q_star = max(self.bin_thresholds)

    @property
    def per_bin(self) -> dict[int, int]:
        """Per-bin thresholds, exposed for diagnostics."""
        return dict(enumerate(self.bin_thresholds))


def calibrate(scores, labels, partition: FrequencyPartition,
              alpha: float) -> CalibratedThreshold:
    """Bin scores by label and take the ceil((1-alpha)(n_l+1))-th smallest.

    Bins whose required rank exceeds their size (including empty bins)
    saturate to grid_max, which keeps the coverage guarantee vacuously.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    per_bin: list[list[int]] = [[] for _ in range(partition.n_bins)]
    for score, label in zip(scores, labels):
        per_bin[partition.bin_of(label)].append(score)
    counts, thresholds = [], []
    for bucket in per_bin:
        bucket.sort()
        n_l = len(bucket)
        k = math.ceil((1.0 - alpha) * (n_l + 1))
        thresholds.append(bucket[k - 1] if k <= n_l else partition.grid_max)
        counts.append(n_l)
    return CalibratedThreshold(alpha, partition.grid_max, partition, counts, thresholds)


def score_pairs(rule, pairs: list[CalibrationPair]) -> tuple[list[int], list[int]]:
    """Conformity scores and labels for a batch of calibration pairs."""
    scores = [conformity_score(rule, p.feature, p.label) for p in pairs]
    labels = [p.label for p in pairs]
    return scores, labels


# ---------------------------------------------------------------------------
# interval construction


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: int
    upper: int
    alpha: float
    warmup_offset: int

    @property
    def length(self) -> int:
        return self.upper - self.lower

    def covers(self, count: int) -> bool:
        return self.lower <= count <= self.upper


def predict_interval(item, sketch, tracker, rule,
                     threshold: CalibratedThreshold,
                     singleton_shortcut: bool = False) -> ConfidenceInterval:
    """One-sided interval: calibrated lower bound up to the sketch bound.

    Both ends carry the item's exact warm-up count, since that part of the
    frequency is known.  With singleton_shortcut, warm-up items get their
    exact frequency back as a point interval.
    """
    offset = tracker.warmup_count(item)
    if singleton_shortcut and offset > 0:
        exact = offset + tracker.supervised_count(item)
        return ConfidenceInterval(exact, exact, threshold.alpha, offset)
    feature = sketch.query_upper(item)
    lower = offset + rule.lower(feature, threshold.q_star)
    upper = offset + feature
    return ConfidenceInterval(lower, upper, threshold.alpha, offset)


def two_sided_interval(item, sketch, tracker,
                       lower_rule, lower_threshold: CalibratedThreshold,
                       upper_rule, upper_threshold: CalibratedThreshold,
                       singleton_shortcut: bool = False) -> ConfidenceInterval:
    """Two-sided interval from a pair of one-sided calibrations.

    Each side is calibrated at half the target miscoverage, so the union
    bound gives the full two-sided level.  alpha on the result reports the
    combined level.

    For a query whose deterministic bound sits far above the calibrated
    upper threshold the two sides can cross; the upper end then falls back
    to the deterministic bound, which is valid unconditionally and leaves
    the miscoverage bounded by the lower side's half-level alone.
    """
    alpha = lower_threshold.alpha + upper_threshold.alpha
    offset = tracker.warmup_count(item)
    if singleton_shortcut and offset > 0:
        exact = offset + tracker.supervised_count(item)
        return ConfidenceInterval(exact, exact, alpha, offset)
    feature = sketch.query_upper(item)
    lower = offset + lower_rule.lower(feature, lower_threshold.q_star)
    upper = offset + upper_rule.upper(feature, upper_threshold.q_star)
    if upper < lower:
        upper = offset + feature
    assert lower <= upper, f"crossed interval for {item!r}: [{lower}, {upper}]"
    return ConfidenceInterval(lower, upper, alpha, offset)


# ---------------------------------------------------------------------------
# persistence of calibrated predictors
#
# Structured text, one key=value per line, then one "bin" line per
# frequency bin and, for adaptive rules, one "qrow" line per feature bin.


def rule_for(kind: str, grid_max: int,
             model: ResidualQuantileModel | None = None):
    if kind == FIXED_LOWER:
        return FixedLowerRule(grid_max)
    if kind == FIXED_UPPER:
        return FixedUpperRule(grid_max)
    if kind == ADAPTIVE_LOWER:
        return AdaptiveLowerRule(model, grid_max)
    raise ValueError(f"unknown rule kind {kind!r}")


def threshold_to_text(rule, threshold: CalibratedThreshold) -> str:
    lines = [
        "format=sketchci-threshold-v1",
        f"rule={rule.kind}",
        f"alpha={threshold.alpha!r}",
        f"grid_max={threshold.grid_max}",
        f"q_star={threshold.q_star}",
        "partition_edges=" + ",".join(str(e) for e in threshold.partition.edges),
    ]
    for l, (n_l, thr) in enumerate(zip(threshold.bin_counts, threshold.bin_thresholds)):
        lines.append(f"bin\t{l}\t{n_l}\t{thr}")
    if rule.kind == ADAPTIVE_LOWER:
        model = rule.model
        lines.append("feature_cuts=" + ",".join(str(c) for c in model.feature_cuts))
        lines.append("levels=" + ",".join(repr(l) for l in model.levels))
        for bi in range(model.table.shape[0]):
            row = ",".join(repr(float(v)) for v in model.table[bi])
            lines.append(f"qrow\t{bi}\t{row}")
    return "".join(line + "\n" for line in lines)


def threshold_from_text(text: str):
    """Parse threshold_to_text output; returns (rule, CalibratedThreshold)."""
    kv: dict[str, str] = {}
    bins: list[tuple[int, int, int]] = []
    qrows: list[tuple[int, list[float]]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("bin\t"):
            _, l, n_l, thr = line.split("\t")
            bins.append((int(l), int(n_l), int(thr)))
        elif line.startswith("qrow\t"):
            _, bi, row = line.split("\t")
            qrows.append((int(bi), [float(v) for v in row.split(",")]))
        else:
            key, _, value = line.partition("=")
            kv[key] = value
    if kv.get("format") != "sketchci-threshold-v1":
        raise ValueError("not a threshold file")
    grid_max = int(kv["grid_max"])
    partition = FrequencyPartition([int(e) for e in kv["partition_edges"].split(",")])
    bins.sort()
    threshold = CalibratedThreshold(
        float(kv["alpha"]), grid_max, partition,
        [n for _, n, _ in bins], [t for _, _, t in bins])
    kind = kv["rule"]
    model = None
    if kind == ADAPTIVE_LOWER:
        model = ResidualQuantileModel(levels=[float(v) for v in kv["levels"].split(",")])
        model.feature_cuts = (
            [int(c) for c in kv["feature_cuts"].split(",")] if kv["feature_cuts"] else [])
        qrows.sort()
        model.table = np.array([row for _, row in qrows])
    return rule_for(kind, grid_max, model), threshold
