"""Portable deterministic random number generation.

Every stochastic component in this package (parameter init, synthetic data,
batch shuffling, verification trials) draws from the xorshift64* generator
defined here, so any implementation of the same byte-level recipe reproduces
identical streams:

* state update: ``x ^= x >> 12; x ^= (x << 25) & 2^64-1; x ^= x >> 27``
* output: ``(x * 2685821657736338717) mod 2^64``
* seeding: the raw seed is passed through one splitmix64 finalizer step;
  a zero state is replaced by the splitmix64 increment constant.
* ``uniform()``: take the top 53 bits of the output, scale by 2^-53 -> [0, 1).
* ``gaussian()``: Box-Muller cosine branch over exactly two uniforms,
  ``sqrt(-2 ln u1) * cos(2 pi u2)`` with u1 shifted into (0, 1]; the sine
  branch is discarded, so each call consumes two uniform draws.
* substreams: ``derive_seed(seed, index)`` = splitmix64 finalizer applied to
  ``seed + (index + 1) * 0x9E3779B97F4A7C15 mod 2^64``.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_SPLITMIX_INC = 0x9E3779B97F4A7C15
_STAR_MULT = 2685821657736338717


def _splitmix64_fin(z: int) -> int:
    """splitmix64 finalizer; scrambles seeds into well-mixed states."""
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Derive the seed of independent substream `index` from a parent seed."""
    if index < 0:
        raise ValueError("substream index must be >= 0")
    return _splitmix64_fin((seed + (index + 1) * _SPLITMIX_INC) & _MASK64)


class XorShift64Star:
    """xorshift64* stream with uniform and Gaussian draws."""

    def __init__(self, seed: int):
        state = _splitmix64_fin(seed & _MASK64)
        self._state = state if state != 0 else _SPLITMIX_INC

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * _STAR_MULT) & _MASK64

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def gaussian(self) -> float:
        """Standard normal via the Box-Muller cosine branch (two uniforms)."""
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53  # (0, 1]
        u2 = (self.next_u64() >> 11) * 2.0**-53  # [0, 1)
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]
