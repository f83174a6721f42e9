"""Seeded random-stream derivation.

Every random decision in a run is drawn from its own PCG64 substream,
keyed by the run seed plus small integer tags. Streams are independent of
each other and of consumption order, which keeps client selection, batch
orders, partitions, and weight init reproducible no matter which protocol
or execution order consumes them.
"""

from __future__ import annotations

import numpy as np

# Substream tags (spawn-key namespace).
TAG_INIT = 0
TAG_PARTITION = 1
TAG_SPLIT = 2
TAG_SELECT = 3
TAG_BATCH = 4
TAG_BLOBS = 5
TAG_CLIENT = 6
TAG_DIGITS = 7


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream (seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def derive_seed(seed: int, *key: int) -> int:
    """A plain integer seed derived from (seed, key...), for APIs that take one."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
