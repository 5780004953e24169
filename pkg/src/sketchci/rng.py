"""Deterministic 64-bit pseudo-random generator (SplitMix64).

SplitMix64 is a counter-based generator: output i is a pure function of
(seed, i), so streams are reproducible bit-for-bit across platforms and
trivial to reimplement in other languages.  Reference: Steele, Lea &
Flood, "Fast splittable pseudorandom number generators", OOPSLA 2014.

Update rule, all arithmetic mod 2^64:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

Derived conveniences used throughout this package:

    uniform()   = next64() >> 11, scaled by 2^-53  (double in [0, 1))
    randbelow(n) = floor(uniform() * n)            (int in [0, n))
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 2.0**-53


class SplitMix64:
    """Stateful wrapper around the SplitMix64 stream for a given seed."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next64(self) -> int:
        """Next raw 64-bit output."""
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Double in [0, 1) with 53 random bits."""
        return (self.next64() >> 11) * _INV53

    def randbelow(self, n: int) -> int:
        """Integer in [0, n), computed as floor(uniform() * n)."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        return int(self.uniform() * n)
