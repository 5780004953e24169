"""Scikit-learn style front end: fit on a token stream, predict intervals.

`ConformalFrequencyEstimator` wires the pieces together: warm-up exact
tracking, sketching of the remaining stream, split-conformal calibration,
and interval prediction for query tokens.  It follows the estimator
conventions (get_params / set_params, trailing-underscore fitted
attributes, NotFittedError) so it drops into pipelines and model-selection
tooling that expects them.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import conformal
from .hashing import HashFamily
from .sketch import VARIANT_CMS, VARIANT_CU, CountMinSketch
from .tracker import ExactTracker


def validate_tokens(X, name: str = "X") -> list[str]:
    """Coerce an iterable of items into a list of string tokens."""
    if isinstance(X, (str, bytes)):
        raise ValueError(f"{name} must be an iterable of tokens, not a single one")
    tokens = []
    for x in X:
        if isinstance(x, bytes):
            tokens.append(x.decode("utf-8"))
        elif isinstance(x, str):
            tokens.append(x)
        else:
            tokens.append(str(x))
    return tokens


def validate_fraction(value: float, name: str, *, high_open: bool = True) -> float:
    value = float(value)
    top_ok = value < 1.0 if high_open else value <= 1.0
    if not (0.0 <= value and top_ok):
        raise ValueError(f"{name} must be in [0, 1{')' if high_open else ']'}, got {value}")
    return value


class ConformalFrequencyEstimator(BaseEstimator):
    """Frequency intervals from a sketched stream, with conformal coverage.

    fit() consumes the stream: the first `warmup` tokens are counted
    exactly, the rest are absorbed by a count-min sketch (conservative
    update by default).  The warm-up tokens, labeled with their exact
    counts over the sketched portion, calibrate a lower bound for the
    sketch's deterministic upper bound.  predict() then maps query tokens
    to [lower, upper] interval rows that contain the true stream frequency
    with probability >= 1 - alpha, marginally over exchangeable queries
    (and per frequency bin when bins > 1).

    Parameters
    ----------
    variant : "cu" or "cms", sketch update discipline.
    d, w : sketch depth (hash functions) and width (buckets per row).
    warmup : number of leading tokens tracked exactly.
    alpha : target miscoverage level.
    bins : frequency bins for bin-conditional calibration (1 = marginal).
    rule : "fixed" or "adaptive" lower-bound rule.
    train_fraction : share of warm-up pairs used to fit the adaptive rule;
        only the remainder is used for calibration.  Ignored (treated as 0)
        by the fixed rule, which has nothing to train.
    two_sided : calibrate both sides at alpha / 2 instead of using the
        deterministic upper bound.
    singleton_shortcut : answer warm-up items with their exactly known
        frequency as a point interval.
    hash_seed : master seed for the hash family.
    """

    def __init__(self, variant: str = VARIANT_CU, d: int = 3, w: int = 1000,
                 warmup: int = 5000, alpha: float = 0.05, bins: int = 1,
                 rule: str = conformal.FIXED_LOWER, train_fraction: float = 0.5,
                 two_sided: bool = False, singleton_shortcut: bool = False,
                 hash_seed: int = 0) -> None:
        self.variant = variant
        self.d = d
        self.w = w
        self.warmup = warmup
        self.alpha = alpha
        self.bins = bins
        self.rule = rule
        self.train_fraction = train_fraction
        self.two_sided = two_sided
        self.singleton_shortcut = singleton_shortcut
        self.hash_seed = hash_seed

    def fit(self, X, y=None) -> "ConformalFrequencyEstimator":
        """Ingest the stream X (iterable of tokens) and calibrate."""
        tokens = validate_tokens(X)
        if self.variant not in (VARIANT_CMS, VARIANT_CU):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.rule not in (conformal.FIXED_LOWER, conformal.ADAPTIVE_LOWER):
            raise ValueError(f"unknown rule {self.rule!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0 < self.warmup < len(tokens):
            raise ValueError(
                f"warmup must be in (0, len(X)); got {self.warmup} for {len(tokens)} tokens")
        validate_fraction(self.train_fraction, "train_fraction")

        family = HashFamily(self.d, self.w, self.hash_seed)
        sketch = CountMinSketch(family, variant=self.variant)
        tracker = ExactTracker()
        for token in tokens[:self.warmup]:
            tracker.warmup_ingest(token)
        tracker.close_warmup()
        for token in tokens[self.warmup:]:
            sketch.update(token)
            tracker.supervised_ingest(token)
        sketch.freeze()

        train_fraction = (self.train_fraction
                          if self.rule == conformal.ADAPTIVE_LOWER else 0.0)
        train, calib = tracker.build_calibration_set(sketch, train_fraction)
        grid_max = sketch.total + tracker.warmup_size
        if self.rule == conformal.ADAPTIVE_LOWER:
            model = conformal.ResidualQuantileModel().fit(train)
            rule = conformal.AdaptiveLowerRule(model, grid_max)
        else:
            rule = conformal.FixedLowerRule(grid_max)

        labels = [p.label for p in calib]
        partition = conformal.build_partition(labels, self.bins, grid_max)
        side_alpha = self.alpha / 2.0 if self.two_sided else self.alpha
        scores, score_labels = conformal.score_pairs(rule, calib)
        threshold = conformal.calibrate(scores, score_labels, partition, side_alpha)

        self.sketch_ = sketch
        self.tracker_ = tracker
        self.rule_ = rule
        self.threshold_ = threshold
        self.partition_ = partition
        if self.two_sided:
            upper_rule = conformal.FixedUpperRule(grid_max)
            up_scores, up_labels = conformal.score_pairs(upper_rule, calib)
            self.upper_rule_ = upper_rule
            self.upper_threshold_ = conformal.calibrate(
                up_scores, up_labels, partition, side_alpha)
        return self

    def predict(self, X) -> np.ndarray:
        """Interval rows [lower, upper] for each query token, shape (n, 2)."""
        self._check_fitted()
        tokens = validate_tokens(X)
        out = np.empty((len(tokens), 2), dtype=np.int64)
        for i, token in enumerate(tokens):
            ci = self.predict_one(token)
            out[i, 0] = ci.lower
            out[i, 1] = ci.upper
        return out

    def predict_one(self, token: str) -> conformal.ConfidenceInterval:
        self._check_fitted()
        if self.two_sided:
            return conformal.two_sided_interval(
                token, self.sketch_, self.tracker_,
                self.rule_, self.threshold_,
                self.upper_rule_, self.upper_threshold_,
                singleton_shortcut=self.singleton_shortcut)
        return conformal.predict_interval(
            token, self.sketch_, self.tracker_, self.rule_, self.threshold_,
            singleton_shortcut=self.singleton_shortcut)

    def score(self, X, y) -> float:
        """Empirical coverage of the intervals against true counts y."""
        intervals = self.predict(X)
        y = np.asarray(y, dtype=np.int64)
        if y.shape[0] != intervals.shape[0]:
            raise ValueError("X and y must have matching lengths")
        return float(np.mean((intervals[:, 0] <= y) & (y <= intervals[:, 1])))

    def _check_fitted(self) -> None:
        if not hasattr(self, "threshold_"):
            raise NotFittedError(
                "this ConformalFrequencyEstimator instance is not fitted yet")
