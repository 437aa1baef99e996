"""Seedable 64-bit generator used by every model generator.

SplitMix64 (Steele, Lea & Flood 2014). Chosen because the whole algorithm is
three documented constants and a handful of xor-shifts, so any language can
reproduce a seed's stream bit-for-bit:

    state  += 0x9E3779B97F4A7C15            (golden-ratio increment)
    z       = state
    z       = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z       = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output  = z ^ (z >> 31)

All arithmetic is modulo 2**64.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic stream of 64-bit values from one integer seed."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]. Modulo reduction; bias is irrelevant
        at the range sizes used here and keeps the recipe portable."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, items: list) -> None:
        """Fisher-Yates, in place."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def next_u64_array(self, n: int) -> np.ndarray:
        """Vectorized continuation of the same stream: identical values to
        calling next_u64 n times."""
        states = (self._state + _GAMMA * np.arange(1, n + 1, dtype=np.uint64))
        self._state = (self._state + _GAMMA * n) & _MASK
        with np.errstate(over="ignore"):
            z = states
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            return z ^ (z >> np.uint64(31))

    def randint_array(self, lo: int, hi: int, n: int) -> np.ndarray:
        span = np.uint64(hi - lo + 1)
        return (self.next_u64_array(n) % span).astype(np.int64) + lo
