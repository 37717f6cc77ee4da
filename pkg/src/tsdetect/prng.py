"""SplitMix64 pseudo-random stream used by the synthetic generator.

The generator is pinned to an explicitly specified algorithm so committed
golden files survive interpreter and platform changes. One step of state
``s`` (all arithmetic mod 2**64):

    s     = s + 0x9E3779B97F4A7C15
    z     = s
    z     = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z     = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out   = z ^ (z >> 31)

``uniform()`` maps the top 53 bits of ``out`` to [0, 1). Independent streams
for distinct purposes are derived by XOR-ing the seed with a fixed tag before
construction, so consuming one stream never shifts another.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Stream tags (arbitrary fixed constants, documented here once).
TAG_TRAJECTORY = 0x5DEECE66D
TAG_CANDIDATES = 0xB5026F5AA96619E9


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p


def stream(seed: int, tag: int) -> SplitMix64:
    """Derive an independent stream for one purpose from the master seed."""
    return SplitMix64((seed ^ tag) & _MASK64)
