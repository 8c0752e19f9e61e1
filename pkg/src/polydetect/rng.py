"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by a tuple of
non-negative integers, e.g. ``(master_seed, STREAM_CHANNEL, trial)``.  The
same key always yields the same stream, regardless of how work is split
between workers.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int]]

STREAM_PROFILE = 0
STREAM_CHANNEL = 1
STREAM_SYMBOLS = 2


def seed_key(seed: SeedLike) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        key = (int(seed),)
    else:
        key = tuple(int(s) for s in seed)
    if not key or any(s < 0 for s in key):
        raise ValueError(f"seed must be a non-empty tuple of non-negative ints, got {seed!r}")
    return key


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Return a Philox generator for ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key(seed))))
