"""Portable seeded randomness for instance generation.

All generators in this package draw from SplitMix64 so that instances are
reproducible across platforms and Python versions (``random.Random`` makes
no such guarantee for its float stream). Streams for batch items are derived
by mixing the item index into the seed, so generating instance k never
depends on how many instances were generated before it.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """One SplitMix64 output step applied to x."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class SplitMix64:
    """SplitMix64 generator with a tiny convenience API."""

    name = "splitmix64"

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return mix64(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53-bit mantissa, same construction as java.util.SplittableRandom
        u = self.next_u64() >> 11
        return lo + (hi - lo) * (u / float(1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        span = hi - lo + 1
        return lo + self.next_u64() % span

    def choice(self, seq):
        return seq[self.next_u64() % len(seq)]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]


def stream(seed: int, index: int) -> SplitMix64:
    """Derive an independent generator for one item of a batch."""
    return SplitMix64(mix64(seed & _MASK) ^ mix64((index + 1) * _GOLDEN))
