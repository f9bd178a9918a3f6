"""Deterministic counter-based random number generator with splittable streams.

The generator is a strided counter pushed through the SplitMix64 finalizer:

    out(stream, n) = mix64(base(seed) + (stream * 2^34 + n) * GAMMA)  mod 2^64

Every (seed, stream) pair addresses a disjoint window of 2^34 draws of one
global sequence, so per-frame streams never overlap and results do not depend
on the order streams are consumed in. All arithmetic is on 64-bit integers,
so the integer sequence is identical on every platform and Python version.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_STREAM_SPAN = 1 << 34


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class Rng:
    """One stream of the shared deterministic sequence."""

    def __init__(self, seed: int, stream: int = 0):
        if stream < 0:
            raise ValueError("stream must be non-negative")
        # +GAMMA so the zero state never surfaces; seed 0, stream 0 is then
        # exactly the canonical SplitMix64(0) sequence
        self._base = (_mix64(seed & _MASK) + _GAMMA) & _MASK
        self._counter = (stream & _MASK) * _STREAM_SPAN
        self._end = self._counter + _STREAM_SPAN

    def next_u64(self) -> int:
        if self._counter >= self._end:
            raise RuntimeError("stream exhausted (2^34 draws)")
        out = _mix64((self._base + self._counter * _GAMMA) & _MASK)
        self._counter += 1
        return out

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi) with 53-bit resolution."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Gaussian via Box-Muller; consumes exactly two draws."""
        # u1 strictly inside (0, 1) so log() is finite
        u1 = ((self.next_u64() >> 11) + 0.5) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)

    def randbelow(self, n: int) -> int:
        """Exact uniform integer in [0, n) via rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (_MASK + 1) - ((_MASK + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), order of selection (Floyd-style)."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        chosen: list[int] = []
        seen: set[int] = set()
        for j in range(n - k, n):
            t = self.randbelow(j + 1)
            if t in seen:
                t = j
            seen.add(t)
            chosen.append(t)
        return chosen
