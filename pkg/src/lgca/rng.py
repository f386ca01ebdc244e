"""Portable deterministic randomness.

Every random draw in this package comes from SplitMix64 (Steele, Lea &
Flood's 64-bit mixer, the seeding generator of the xoshiro family). The
algorithm is small enough to restate completely, so seeded runs can be
reproduced bit-for-bit by an independent implementation in any language:

    state   <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z       <- state
    z       <- ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z       <- ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output  <- z XOR (z >> 31)

Derived draws:
    float in [0, 1):       (output >> 11) * 2^-53
    integer in [0, n):     (output * n) >> 64          (multiply-high)
    uniform(lo, hi):       lo + (hi - lo) * float

Named streams are seeded with the first 8 bytes of BLAKE2b(tag, key=seed),
so independent consumers of one user seed never share a sequence.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """SplitMix64 stream; see module docstring for the exact algorithm."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform double in [0, 1) from the 53 high bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) via multiply-high reduction.

        The modulo bias is below n / 2^64, irrelevant at pixel scales, and
        the rule is trivially portable (it is a single 128-bit multiply).
        """
        if n <= 0:
            raise ValueError(f"next_below needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()


def stream_for(seed: int, tag: str) -> SplitMix64:
    """Independent SplitMix64 stream for (seed, tag).

    Tags are short ASCII labels such as ``"crops:<image id>"``; the BLAKE2b
    keyed hash keeps streams for different tags statistically unrelated
    while remaining reproducible across implementations.
    """
    key = (seed & MASK64).to_bytes(8, "big")
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8, key=key).digest()
    return SplitMix64(int.from_bytes(digest, "big"))
