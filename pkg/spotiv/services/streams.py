"""Keyed random streams: one independent generator per (seed, role, indices)."""

from enum import IntEnum

import numpy as np


class StreamRole(IntEnum):
    DATA = 0
    DESIGN = 1
    BOOTSTRAP = 2
    ORACLE = 3


def make_rng(seed: int, role: StreamRole, *indices: int) -> np.random.Generator:
    """
    Generator for one stream.

    Streams with different keys never overlap, so replications and bootstrap
    draws can be evaluated in any order or on any worker.
    """
    sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int(role), *(int(i) for i in indices))
    )
    return np.random.Generator(np.random.PCG64(sequence))
