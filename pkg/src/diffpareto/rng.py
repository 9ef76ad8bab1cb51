"""Deterministic random streams for every sampled object in this package.

Topologies, data matrices, and step-size draws must be bit-for-bit
reproducible from a 64-bit seed, independent of platform or library
version. The stream is a splitmix64 counter generator; normal deviates
come from the basic Box-Muller transform.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """64-bit splitmix stream: one counter stepped by the golden-ratio gamma,
    output run through a finalizer mix. Trivial to reimplement exactly."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n), rejection-sampled to avoid modulo bias."""
        if n <= 0:
            raise ValueError("bound must be positive")
        span = _MASK64 + 1
        limit = span - span % n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normal_pair(self) -> tuple[float, float]:
        # u1 shifted into (0, 1] so the log is always defined
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        return r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)

    def normals(self, n: int) -> list[float]:
        """n standard-normal draws; Box-Muller pairs, last one dropped if n is odd."""
        out: list[float] = []
        while len(out) < n:
            z1, z2 = self.normal_pair()
            out.append(z1)
            if len(out) < n:
                out.append(z2)
        return out
