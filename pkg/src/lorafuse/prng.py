"""Deterministic PRNG and shuffle used wherever byte-for-byte reproducibility matters.

The generator is SplitMix64. The exact algorithm is part of the repo's
documented contract (see docs/formats.md) so that independent
implementations of the pipeline shuffle identically:

    state <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z <- state
    z <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2^64
    z <- (z XOR (z >> 27)) * 0x94D049BB133111EB   mod 2^64
    output: z XOR (z >> 31)

Fisher-Yates draws j = next() mod (i + 1) for i = n-1 .. 1 and swaps
items i and j. The modulo bias is negligible for list sizes here and is
accepted for the sake of a one-line cross-language spec.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """64-bit SplitMix generator; tiny, fast enough, trivially portable."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound


def fisher_yates(items: list, seed: int) -> list:
    """Return a new list holding `items` shuffled by seeded Fisher-Yates."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def derive_seed(base_seed: int, label: str) -> int:
    """Deterministic per-label sub-seed: base XOR the first 8 LE bytes of blake2b(label)."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return (base_seed ^ int.from_bytes(digest, "little")) & _MASK64
