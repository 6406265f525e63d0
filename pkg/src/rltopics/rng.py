"""Seeded random source with independently derived named substreams.

All randomness in a run flows through one :class:`RandomSource`. The PRNG is
numpy's PCG64; substreams are derived with ``SeedSequence(seed, spawn_key)``
so the same seed yields the same draws on every platform, and toggling one
consumer (say, dropout) never perturbs the draws seen by another (say,
parameter init).
"""

from __future__ import annotations

import numpy as np

# Fixed purpose -> spawn-key assignments. Appending new purposes is safe;
# renumbering existing ones breaks cross-version reproducibility.
_STREAM_IDS = {
    "init": 0,
    "dropout": 1,
    "action": 2,
    "shuffle": 3,
    "policy_dropout": 4,
    "seeds": 5,
}


class RandomSource:
    """PCG64 generator factory keyed by a 64-bit run seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        """Return the generator for a named purpose, creating it on first use."""
        if name not in _STREAM_IDS:
            raise KeyError(f"unknown random stream {name!r}")
        if name not in self._streams:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(_STREAM_IDS[name],))
            self._streams[name] = np.random.Generator(np.random.PCG64(seq))
        return self._streams[name]


def generate_seeds(meta_seed: int, n: int) -> list[int]:
    """Draw ``n`` distinct 64-bit run seeds from a meta-seeded source.

    Duplicates are re-drawn so the list is collision-free.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = RandomSource(meta_seed).stream("seeds")
    seeds: list[int] = []
    seen: set[int] = set()
    while len(seeds) < n:
        s = int(gen.integers(0, 2**64, dtype=np.uint64))
        if s not in seen:
            seen.add(s)
            seeds.append(s)
    return seeds
