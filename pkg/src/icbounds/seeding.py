"""Splittable seed derivation.

Every random stream is keyed by ``(seed, purpose, *index)`` through
:class:`numpy.random.SeedSequence` spawn keys, so streams for different
purposes (positions, fading, box pairing, trials) never overlap and any
single stream can be regenerated on its own.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "positions": 1,
    "fading": 2,
    "box_pairing": 3,
    "trial": 4,
    "oracle": 5,
    "tail": 6,
    "occupancy": 7,
    "threshold_graph": 8,
    "walkup": 9,
    "instance_k": 10,
}

MAX_SEED = 2**64 - 1


def _sequence(seed: int, purpose: str, index: tuple[int, ...]) -> np.random.SeedSequence:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.SeedSequence(entropy=seed, spawn_key=(PURPOSES[purpose], *map(int, index)))


def derive_rng(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for ``purpose`` (and optional integer index) under ``seed``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, purpose, index)))


def derive_seed(seed: int, purpose: str, *index: int) -> int:
    """A child 64-bit seed, e.g. one per Monte Carlo trial."""
    return int(_sequence(seed, purpose, index).generate_state(1, dtype=np.uint64)[0])
