"""Deterministic, seed-derived random streams.

Every randomized component (a tree, a benchmark run, a Monte-Carlo trial)
gets its own stream identified by a master seed plus an integer path, so
results never depend on thread scheduling or on how much randomness a
sibling consumed.  Derivation goes through numpy's ``SeedSequence`` spawn
keys, which keeps child streams statistically independent.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, None, np.random.SeedSequence]


def seed_sequence(seed: SeedLike, *path: int) -> np.random.SeedSequence:
    """SeedSequence for the stream identified by ``(seed, *path)``.

    Paths compose: ``seed_sequence(seed_sequence(s, a), b)`` equals
    ``seed_sequence(s, a, b)``.  A ``None`` seed draws fresh OS entropy,
    so call it once and reuse the result when reproducibility matters.
    """
    if isinstance(seed, np.random.SeedSequence):
        if not path:
            return seed
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(path)
        )
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))


def stream(seed: SeedLike, *path: int) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *path)``."""
    return np.random.default_rng(seed_sequence(seed, *path))


def derive_seed(seed: SeedLike, *path: int) -> int:
    """Collapse ``(seed, *path)`` to a plain 64-bit integer seed.

    Useful for logging: feeding the returned value back in as a master
    seed reproduces the derived stream's component exactly.
    """
    lo, hi = seed_sequence(seed, *path).generate_state(2, np.uint32)
    return int(hi) << 32 | int(lo)
