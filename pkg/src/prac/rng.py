"""Seeded random streams.

Every random draw in the package goes through :class:`RngStream`, which wraps
numpy's Philox-4x64 counter-based generator. The 128-bit Philox key is
``seed | (stream << 64)``, so ``(seed, stream)`` pairs give independent,
platform-stable sequences.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream ids reserved for fixed purposes; round k of a search uses stream k.
INIT_STREAM = 0
EVAL_STREAM = 10_000
SUBSET_STREAM = 20_000
RANDOM_MASK_STREAM = 30_000
RANDOM_TICKET_STREAM = 40_000
SPLIT_STREAM = 50_000


class RngStream:
    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._bitgen = np.random.Philox(key=self.seed | (self.stream << 64))
        self.gen = np.random.Generator(self._bitgen)

    @property
    def counter(self) -> int:
        c = self._bitgen.state["state"]["counter"]
        return int(sum(int(v) << (64 * i) for i, v in enumerate(c)))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True):
        return self.gen.choice(a, size=size, replace=replace)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"
