"""Seed derivation.

Every random stream in the package comes from ``derive(master, *keys)``.
Keys are strings or non-negative ints; strings are folded to 32-bit ints
with CRC32 so that e.g. ``derive(7, "survival", 3)`` and
``derive(7, "adaptive", 3)`` live in disjoint namespaces.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_int(key: str | int) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    k = int(key)
    if k < 0:
        raise ValueError(f"seed keys must be non-negative, got {k}")
    return k


def seed_sequence(master: int, *keys: str | int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(_key_int(k) for k in keys))


def derive(master: int, *keys: str | int) -> np.random.Generator:
    """Return an independent generator for the namespace ``keys``."""
    return np.random.default_rng(seed_sequence(master, *keys))


def derive_int(master: int, *keys: str | int) -> int:
    """A 63-bit integer seed for the namespace, for handing to sub-components."""
    return int(seed_sequence(master, *keys).generate_state(1, dtype=np.uint64)[0]) >> 1
