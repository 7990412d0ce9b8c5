"""Seeded, independently streamable random number generators."""
from __future__ import annotations

import numpy as np


class RngStream:
    """PCG64 generator keyed by ``(seed, stream)``.

    Streams with different ids are statistically independent; the same
    ``(seed, stream)`` pair always reproduces the same draws.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, stream: int) -> RngStream:
        return RngStream(self.seed, stream)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"
