"""Reproducible, stream-splittable random number generation.

Every draw comes from a Philox counter-based bit generator keyed by
``(seed, stream)`` through :class:`numpy.random.SeedSequence`, so parallel
workers given distinct stream numbers never overlap and any
``(seed, stream)`` pair replays bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

GENERATOR_NAME = "numpy.random.Philox(SeedSequence(seed, spawn_key=(stream,)))"


@dataclass(frozen=True)
class RandomSeed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64) or int(self.stream) < 0:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer and stream >= 0")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "RandomSeed":
        return RandomSeed(self.seed, stream)


def as_generator(seed) -> np.random.Generator:
    """Accept a RandomSeed, an int seed (stream 0) or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, RandomSeed):
        return seed.generator()
    if isinstance(seed, (int, np.integer)):
        return RandomSeed(int(seed)).generator()
    raise InvalidParameterError(f"cannot make a generator from {seed!r}")
