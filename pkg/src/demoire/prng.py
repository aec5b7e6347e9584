"""Portable 64-bit PRNG (xoshiro256**) seeded through splitmix64.

Every random draw in the synthesis and masking code goes through this
generator so that datasets are reproducible across platforms and numpy
versions.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def item_seed(global_seed: int, index: int) -> int:
    """Per-item seed: ``global_seed XOR (index * golden gamma)`` modulo 2**64."""
    return (int(global_seed) ^ ((int(index) * GOLDEN_GAMMA) & MASK64)) & MASK64


class Xoshiro256:
    """xoshiro256** generator.

    >>> a, b = Xoshiro256(7), Xoshiro256(7)
    >>> a.next_u64() == b.next_u64()
    True
    """

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        sm = int(seed) & MASK64
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform float in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in the closed range [low, high] (Lemire-free rejection)."""
        if high < low:
            raise ValueError("empty integer range")
        span = high - low + 1
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            v = self.next_u64()
            if v < limit:
                return low + v % span

    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, one value per call)."""
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def random_array(self, n: int) -> np.ndarray:
        return np.array([self.random() for _ in range(n)], dtype=np.float64)

    def normal_array(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)
