"""Reproducible random streams.

Every Monte Carlo replicate gets its own generator derived from a master
seed and the replicate index, so results do not depend on how the work
is batched or ordered.
"""
from __future__ import annotations

import numpy as np

SeedLike = int | np.random.SeedSequence | np.random.Generator | None


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(master: int, index: int, *, salt: int = 0) -> np.random.SeedSequence:
    """Seed sequence for stream ``index`` of ``master``.

    ``salt`` separates independent families drawn from one master seed
    (e.g. the two sides of a two-sample comparison).
    """
    if salt:
        return np.random.SeedSequence(int(master), spawn_key=(int(salt), int(index)))
    return np.random.SeedSequence(int(master), spawn_key=(int(index),))


def child_rng(master: int, index: int, *, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, index, salt=salt))


def master_int(seed: SeedLike) -> int:
    """Collapse a seed-like value to a 64-bit integer master seed."""
    if seed is None:
        raise ValueError("a seed is required")
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(2, dtype=np.uint32).view(np.uint64)[0])
    return int(seed.integers(0, 2**63 - 1))
