"""Count-min sketch and its conservative-update variant.

The sketch is a d x w matrix of counters.  The vanilla count-min sketch
(Cormode & Muthukrishnan, 2005) increments one counter per row for every
item, so the minimum over a query's d counters never undercounts.  The
conservative update ("cu") raises every counter at the item's buckets to
max(current, min + 1): it absorbs each item while inflating collided
counters as little as possible, which keeps the same never-undercount
guarantee while tightening the estimates.

A third, off-by-default mode (`single_argmin=True`) increments only the
single lowest counter per item.  It is provided for fidelity experiments
with that historical formulation; it does NOT preserve the upper-bound
guarantee and should not be used for calibrated intervals.
"""

from __future__ import annotations

import math
import struct
from array import array

from .hashing import HashFamily

VARIANT_CMS = "cms"
VARIANT_CU = "cu"

_MAX_COUNT = (1 << 63) - 1
_MAGIC = b"SKCI"
_VERSION = 1
# variant codes in the serialized header
_CODES = {(VARIANT_CMS, False): 0, (VARIANT_CU, False): 1, (VARIANT_CU, True): 2}
_CODES_REV = {v: k for k, v in _CODES.items()}


class CountMinSketch:
    """d x w counter matrix with seeded hashing and a frozen-read phase.

    Parameters:
        family: HashFamily supplying the d row hashes over w buckets.
        variant: "cms" (one increment per row) or "cu" (conservative update).
        single_argmin: with "cu", increment only the lowest counter instead
            of raising all minima.  Off by default; see module docstring.
    """

    def __init__(self, family: HashFamily, variant: str = VARIANT_CU,
                 single_argmin: bool = False) -> None:
        if variant not in (VARIANT_CMS, VARIANT_CU):
            raise ValueError(f"unknown variant {variant!r}")
        if single_argmin and variant != VARIANT_CU:
            raise ValueError("single_argmin only applies to the cu variant")
        self.family = family
        self.variant = variant
        self.single_argmin = single_argmin
        self.counts = [[0] * family.w for _ in range(family.d)]
        self.total = 0  # items absorbed so far
        self.frozen = False

    def update(self, item) -> None:
        """Absorb one item, dispatching on the configured variant."""
        if self.variant == VARIANT_CMS:
            self.update_cms(item)
        else:
            self.update_cu(item)

    def update_cms(self, item) -> None:
        """Vanilla update: increment one counter per row."""
        if self.variant != VARIANT_CMS:
            raise RuntimeError(f"update_cms called on a {self.variant!r} sketch")
        self._check_writable()
        counts = self.counts
        for j, k in enumerate(self.family.buckets(item)):
            counts[j][k] += 1
        self.total += 1

    def update_cu(self, item) -> None:
        """Conservative update: raise the item's counters to max(c, min+1)."""
        if self.variant != VARIANT_CU:
            raise RuntimeError(f"update_cu called on a {self.variant!r} sketch")
        self._check_writable()
        counts = self.counts
        buckets = self.family.buckets(item)
        if self.single_argmin:
            # literal form: bump only the lowest counter (lowest row on ties)
            j_star = min(range(len(buckets)), key=lambda j: counts[j][buckets[j]])
            counts[j_star][buckets[j_star]] += 1
        else:
            low = min(counts[j][k] for j, k in enumerate(buckets))
            target = low + 1
            for j, k in enumerate(buckets):
                if counts[j][k] < target:
                    counts[j][k] = target
        self.total += 1

    def query_upper(self, item) -> int:
        """Deterministic upper bound: min over the item's d counters.

        Always >= the item's true count among absorbed items (cms and cu;
        not guaranteed under single_argmin).
        """
        counts = self.counts
        return min(counts[j][k] for j, k in enumerate(self.family.buckets(item)))

    def freeze(self) -> "CountMinSketch":
        """End the write phase; queries may then run concurrently."""
        self.frozen = True
        return self

    def _check_writable(self) -> None:
        if self.frozen:
            raise RuntimeError("sketch is frozen; no further updates allowed")
        if self.total >= _MAX_COUNT:
            # every counter is bounded by `total`, so this guards overflow
            raise OverflowError("64-bit counter limit reached")

    # -- persistence ------------------------------------------------------
    #
    # Flat little-endian layout:
    #   magic "SKCI" | version u8 | variant u8 | d u32 | w u64 | total u64
    #   | master_seed u64 | d x (a_j u64, b_j u64) | d*w counters u64
    # variant codes: 0 = cms, 1 = cu, 2 = cu with single_argmin.

    def to_bytes(self) -> bytes:
        head = struct.pack(
            "<4sBBIQQQ", _MAGIC, _VERSION,
            _CODES[(self.variant, self.single_argmin)],
            self.family.d, self.family.w, self.total, self.family.master_seed,
        )
        seeds = array("Q")
        for a, b in self.family.pairs:
            seeds.append(a)
            seeds.append(b)
        body = array("Q")
        for row in self.counts:
            body.extend(row)
        if struct.pack("<Q", 1) != array("Q", [1]).tobytes():  # pragma: no cover
            seeds.byteswap()
            body.byteswap()
        return head + seeds.tobytes() + body.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CountMinSketch":
        head_size = struct.calcsize("<4sBBIQQQ")
        magic, version, code, d, w, total, master_seed = struct.unpack(
            "<4sBBIQQQ", blob[:head_size])
        if magic != _MAGIC:
            raise ValueError("not a sketch file")
        if version != _VERSION:
            raise ValueError(f"unsupported sketch format version {version}")
        variant, single_argmin = _CODES_REV[code]
        seeds = array("Q")
        seeds.frombytes(blob[head_size:head_size + 16 * d])
        body = array("Q")
        body.frombytes(blob[head_size + 16 * d:])
        if struct.pack("<Q", 1) != array("Q", [1]).tobytes():  # pragma: no cover
            seeds.byteswap()
            body.byteswap()
        if len(body) != d * w:
            raise ValueError("truncated sketch file")
        pairs = [(seeds[2 * j], seeds[2 * j + 1]) for j in range(d)]
        family = HashFamily.from_pairs(w, pairs, master_seed=master_seed)
        sketch = cls(family, variant=variant, single_argmin=single_argmin)
        sketch.counts = [list(body[j * w:(j + 1) * w]) for j in range(d)]
        sketch.total = total
        sketch.frozen = True  # persisted sketches are read-only
        return sketch

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CountMinSketch":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def classical_lower_bound(upper: int, m: int, w: int) -> int:
    """Hash-randomness lower bound: max(0, upper - ceil(e * m / w)).

    Valid at confidence 1 - delta when the sketch uses d = ceil(-ln delta)
    rows (d = 3 gives 95%); m is the number of sketched items.
    """
    if m < 0:
        raise ValueError(f"stream length must be >= 0, got {m}")
    if w < 1:
        raise ValueError(f"width must be >= 1, got {w}")
    return max(0, upper - math.ceil(math.e * m / w))
