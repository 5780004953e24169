"""Seedable pairwise-independent hash family for bucketing byte-string items.

Each of the d rows is a Carter-Wegman hash over the Mersenne-prime field
p = 2^61 - 1, applied to a fixed 64-bit digest of the item:

    digest64(z) = first 8 bytes of SHA-256(z), big-endian
    h_j(z)      = ((a_j * digest64(z) + b_j) mod p) mod w

The (a_j, b_j) pairs come from the SplitMix64 stream s_0, s_1, ... seeded
with master_seed:

    a_j = 1 + (s_{2j}   mod (p - 1))        in [1, p-1]
    b_j =      s_{2j+1} mod p               in [0, p-1]

Everything above is fixed so that an independent implementation can
reproduce bucket assignments exactly from (d, w, master_seed).
"""

from __future__ import annotations

import hashlib

from .rng import SplitMix64

MERSENNE_P = (1 << 61) - 1


def digest64(data: bytes) -> int:
    """64-bit digest of an item: SHA-256 truncated to its first 8 bytes."""
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "big")


class HashFamily:
    """d seeded hash functions mapping items into w buckets each.

    Immutable after construction; safe to share across readers.  Items may
    be str (UTF-8 encoded before digesting) or bytes.
    """

    __slots__ = ("d", "w", "master_seed", "pairs")

    def __init__(self, d: int, w: int, master_seed: int) -> None:
        if d < 1:
            raise ValueError(f"need at least one hash function, got d={d}")
        if w < 1:
            raise ValueError(f"need at least one bucket, got w={w}")
        self.d = d
        self.w = w
        self.master_seed = master_seed
        rng = SplitMix64(master_seed)
        pairs = []
        for _ in range(d):
            a = 1 + rng.next64() % (MERSENNE_P - 1)
            b = rng.next64() % MERSENNE_P
            pairs.append((a, b))
        self.pairs = tuple(pairs)

    @classmethod
    def from_pairs(cls, w: int, pairs, master_seed: int = 0) -> "HashFamily":
        """Rebuild a family from explicit (a, b) pairs, e.g. after deserialization."""
        fam = cls.__new__(cls)
        fam.d = len(pairs)
        fam.w = w
        fam.master_seed = master_seed
        fam.pairs = tuple((int(a), int(b)) for a, b in pairs)
        if fam.d < 1 or w < 1:
            raise ValueError("need d >= 1 and w >= 1")
        for a, _ in fam.pairs:
            if not 0 < a < MERSENNE_P:
                raise ValueError(f"multiplier out of range: {a}")
        return fam

    def bucket(self, j: int, item) -> int:
        """Bucket of `item` under row j."""
        a, b = self.pairs[j]
        return ((a * _digest_item(item) + b) % MERSENNE_P) % self.w

    def buckets(self, item) -> list[int]:
        """Buckets of `item` under all d rows (digest computed once)."""
        x = _digest_item(item)
        w = self.w
        return [((a * x + b) % MERSENNE_P) % w for a, b in self.pairs]


def _digest_item(item) -> int:
    if isinstance(item, str):
        return digest64(item.encode("utf-8"))
    return digest64(item)
