"""Reproducible synthetic token streams and corpus ingestion.

All generators consume the SplitMix64 stream documented in `rng`, so a
(spec, seed) pair fixes the output exactly, on any platform.  Tokens are
plain strings: decimal integers for the synthetic sources, raw lines for
file ingestion.
"""

from __future__ import annotations

from dataclasses import dataclass

from .rng import SplitMix64

ZIPF = "zipf"
PITMAN_YOR = "pitman_yor"
FILE = "file"


@dataclass
class StreamSpec:
    """Stream configuration shared by the CLI and the experiment harness."""

    source: str = ZIPF
    zipf_a: float = 1.5
    py_lambda: float = 5000.0
    py_sigma: float = 0.0
    path: str | None = None
    m: int = 100_000
    m0: int = 5_000
    query_count: int = 10_000
    seed: int = 0

    def validate(self) -> None:
        if self.source not in (ZIPF, PITMAN_YOR, FILE):
            raise ValueError(f"unknown stream source {self.source!r}")
        if self.source == ZIPF and self.zipf_a <= 1.0:
            raise ValueError(f"zipf_a must exceed 1, got {self.zipf_a}")
        if self.source == PITMAN_YOR:
            if self.py_lambda <= 0.0:
                raise ValueError(f"py_lambda must be positive, got {self.py_lambda}")
            if not 0.0 <= self.py_sigma < 1.0:
                raise ValueError(f"py_sigma must be in [0, 1), got {self.py_sigma}")
        if self.source == FILE and not self.path:
            raise ValueError("file source needs a path")
        if not 0 <= self.m0 < self.m:
            raise ValueError(f"need 0 <= m0 < m, got m0={self.m0}, m={self.m}")
        if self.query_count < 1:
            raise ValueError("query_count must be >= 1")

    def generate(self, count: int, seed: int | None = None) -> list[str]:
        self.validate()
        seed = self.seed if seed is None else seed
        if self.source == ZIPF:
            return zipf_stream(self.zipf_a, count, seed)
        if self.source == PITMAN_YOR:
            return pitman_yor_stream(self.py_lambda, self.py_sigma, count, seed)
        tokens = ingest_file(self.path, seed)
        if len(tokens) < count:
            raise ValueError(
                f"{self.path} holds {len(tokens)} tokens, {count} needed")
        return tokens[:count]


def zipf_stream(a: float, count: int, seed: int) -> list[str]:
    """i.i.d. draws with P(z) = z^-a / zeta(a) over z = 1, 2, ...

    Rejection sampler (Devroye 1986, ch. X.6): propose
    X = floor(U^(-1/(a-1))), accept when
    V * X * (T - 1) / (b - 1) <= T / b with T = (1 + 1/X)^(a-1) and
    b = 2^(a-1).  Supports the full unbounded range, no truncation.
    """
    if a <= 1.0:
        raise ValueError(f"tail parameter must exceed 1, got {a}")
    rng = SplitMix64(seed)
    am1 = a - 1.0
    b = 2.0 ** am1
    out = []
    for _ in range(count):
        while True:
            u = rng.uniform()
            v = rng.uniform()
            if u <= 0.0:
                continue
            x_real = u ** (-1.0 / am1)
            if x_real >= 2.0**62:  # astronomically rare; avoids int overflow games
                continue
            x = int(x_real)
            if x < 1:
                continue
            t = (1.0 + 1.0 / x) ** am1
            if v * x * (t - 1.0) / (b - 1.0) <= t / b:
                out.append(str(x))
                break
    return out


def pitman_yor_stream(lam: float, sigma: float, count: int, seed: int) -> list[str]:
    """Sequential draws from the two-parameter (lam, sigma) urn scheme.

    Given i previous draws with k distinct values, the next draw repeats
    value v (seen c_v times) with probability (c_v - sigma) / (lam + i) and
    is new with probability (lam + k * sigma) / (lam + i).  New values get
    fresh integer identifiers: only identity matters for frequencies, and
    draws from a continuous base distribution are almost surely distinct.

    Sampling an existing value runs in O(1) amortized: pick a uniformly
    random past draw (probability proportional to c_v) and accept it with
    probability 1 - sigma / c_v, retrying within the existing-value branch
    otherwise.  For sigma = 0 the acceptance step is skipped entirely.
    """
    if lam <= 0.0:
        raise ValueError(f"concentration must be positive, got {lam}")
    if not 0.0 <= sigma < 1.0:
        raise ValueError(f"discount must be in [0, 1), got {sigma}")
    rng = SplitMix64(seed)
    draws: list[str] = []
    counts: dict[str, int] = {}
    n_distinct = 0
    for i in range(count):
        if i == 0 or rng.uniform() * (lam + i) < lam + n_distinct * sigma:
            n_distinct += 1
            token = str(n_distinct)
            counts[token] = 1
        else:
            while True:
                token = draws[rng.randbelow(i)]
                if sigma == 0.0 or rng.uniform() * counts[token] >= sigma:
                    break
            counts[token] += 1
        draws.append(token)
    return draws


def ingest_file(path, seed: int) -> list[str]:
    """Read newline-delimited tokens and shuffle them uniformly.

    The shuffle (Fisher-Yates driven by SplitMix64) makes the processing
    order exchangeable, which is what the calibrated intervals assume.
    """
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().splitlines()
    tokens = [t for t in tokens if t]
    if not tokens:
        raise ValueError(f"no tokens found in {path}")
    rng = SplitMix64(seed)
    for i in range(len(tokens) - 1, 0, -1):
        j = rng.randbelow(i + 1)
        tokens[i], tokens[j] = tokens[j], tokens[i]
    return tokens
