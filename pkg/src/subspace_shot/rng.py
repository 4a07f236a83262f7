"""Counter-based pseudo-random generator used for sampling and data synthesis.

Benchmark runs must be reproducible from a single integer seed regardless of
platform, thread count, or host language, so the generator is written out
explicitly instead of delegating to numpy's RNG.  The complete recipe (state
transition, float and Gaussian derivation, shuffling) lives in
docs/determinism.md; any implementation that follows it reproduces the exact
same streams.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX_MUL_1 = 0xBF58476D1CE4E5B9
_MIX_MUL_2 = 0x94D049BB133111EB

_INV_2_53 = 2.0**-53
_TWO_PI = 2.0 * math.pi


def mix64(value: int) -> int:
    """Finalizing bijection on 64-bit integers (splitmix64 output mix)."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_MUL_1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_MUL_2) & _MASK64
    return z ^ (z >> 31)


def stream_seed(seed: int, index: int) -> int:
    """Seed for sub-stream ``index`` of a run seeded with ``seed``.

    This is the (index+1)-th raw output of ``SplitMix64(seed)``, so distinct
    indices yield decorrelated generators that can be driven independently
    (and therefore in parallel) while staying reproducible.
    """
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index}")
    return mix64((seed + (index + 1) * GOLDEN_GAMMA) & _MASK64)


class SplitMix64:
    """splitmix64 stream: output i is ``mix64(seed + (i+1)*GOLDEN_GAMMA)``."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & _MASK64
        return mix64(self._state)

    def next_float(self) -> float:
        """Uniform double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def next_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by modulo reduction.

        The modulo bias is below bound / 2**64, irrelevant at the bounds used
        here and trivial to reproduce in any language.
        """
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        return self.next_u64() % bound

    def next_normal(self) -> float:
        """Standard normal via Box-Muller; consumes exactly two draws.

        Delegates to :meth:`normals` so scalar and bulk generation share one
        code path: sqrt(-2 ln u1) * cos(2 pi u2) with u1 in (0, 1] and u2 in
        [0, 1).  Integer and uniform draws are bit-exact across languages;
        the Gaussian transform is additionally subject to the platform
        libm's (at most 1 ulp) rounding of log and cos.
        """
        return float(self.normals(1)[0])

    def floats(self, count: int) -> np.ndarray:
        """Vectorized ``next_float``; advances the stream identically."""
        raw = self._bulk_u64(count)
        return (raw >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normals(self, count: int) -> np.ndarray:
        """Vectorized ``next_normal``; advances the stream identically."""
        if count == 0:
            return np.zeros(0)
        raw = self._bulk_u64(2 * count).reshape(count, 2)
        u1 = ((raw[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)

    def shuffle_prefix(self, population: int, take: int) -> list[int]:
        """First ``take`` entries of a Fisher-Yates shuffle of range(population).

        A uniform ordered sample without replacement; the order is part of
        the contract (episode class slots follow it).
        """
        if not 0 <= take <= population:
            raise ValueError(f"cannot take {take} items out of {population}")
        items = list(range(population))
        for i in range(take):
            j = i + self.next_below(population - i)
            items[i], items[j] = items[j], items[i]
        return items[:take]

    def _bulk_u64(self, count: int) -> np.ndarray:
        steps = np.arange(1, count + 1, dtype=np.uint64)
        counters = np.uint64(self._state) + steps * np.uint64(GOLDEN_GAMMA)
        self._state = (self._state + count * GOLDEN_GAMMA) & _MASK64
        z = counters
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_MUL_1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_MUL_2)
        return z ^ (z >> np.uint64(31))
