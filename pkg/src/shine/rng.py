"""Deterministic random generation for dataset splits and simulated scenes.

The generator is SplitMix64, chosen because it is tiny and trivially
portable: the same 64-bit seed produces the same stream in any language.
Derived draws are fixed here so that partitions and simulated scenes can
be reproduced outside this package:

* ``random()``   -- 53-bit uniform: ``(next_u64() >> 11) * 2**-53``
* ``below(n)``   -- unbiased integer via rejection on ``2**64 - 2**64 % n``
* ``shuffle``    -- Fisher-Yates from the top index down, ``j = below(i+1)``
* ``gauss``      -- Box-Muller on two fresh uniforms (cosine branch)
* ``poisson``    -- Knuth's product-of-uniforms method

Floating-point draws involve libm (`log`, `cos`); bit-identical streams are
guaranteed per platform and in practice across common IEEE-754 platforms.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(value: int) -> int:
    """One SplitMix64 mixing round; used to derive independent child seeds."""
    z = (value + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Seeded deterministic generator; not suitable for cryptography."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 + 1 - (_MASK64 + 1) % n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def choice(self, seq):
        if not seq:
            raise ValueError("cannot choose from an empty sequence")
        return seq[self.below(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # u1 drawn from (0, 1] so log() never sees zero.
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.random()
        radius = math.sqrt(-2.0 * math.log(u1))
        return mu + sigma * radius * math.cos(2.0 * math.pi * u2)

    def poisson(self, lam: float) -> int:
        if lam < 0:
            raise ValueError("rate must be non-negative")
        if lam == 0:
            return 0
        threshold = math.exp(-lam)
        k = 0
        p = 1.0
        while True:
            p *= self.random()
            if p <= threshold:
                return k
            k += 1
