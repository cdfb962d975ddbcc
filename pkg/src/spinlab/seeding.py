"""Deterministic RNG stream derivation.

Child streams are keyed by ``(master, experiment name, cell index)``. The name
is hashed with BLAKE2b (stable across processes, unlike ``hash``) and the three
integers seed a :class:`numpy.random.SeedSequence`. Draws are reproducible run
to run within this build; matching another implementation bit-for-bit is not
a goal.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def name_key(name: str) -> int:
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


def seed_sequence(master: int, name: str = "", cell: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master) & MASK64, name_key(name), int(cell)])


def cell_rng(master: int, name: str = "", cell: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master, name, cell))


def cell_seed(master: int, name: str = "", cell: int = 0) -> int:
    """A 64-bit integer seed for the cell, handy for CSV provenance columns."""
    return int(seed_sequence(master, name, cell).generate_state(1, np.uint64)[0])


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
