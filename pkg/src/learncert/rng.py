"""Seed derivation and counter-addressed random streams.

Every random draw in the toolkit comes from a stream addressed by
``(seed, label, index...)``. Streams are Philox generators keyed through
``SeedSequence`` spawn keys, so draw ``j`` is the same no matter which worker
computes it or in what order.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def label_key(label: str) -> int:
    """Stable 32-bit integer for a stream label."""
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=4).digest(), "little")


def derive_seed(master: int, label: str) -> int:
    """Fan a master seed out to a named stage seed (64-bit)."""
    h = hashlib.blake2b(digest_size=8)
    h.update((int(master) & MASK64).to_bytes(8, "little"))
    h.update(label.encode())
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, label: str, *counters: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=(label_key(label), *map(int, counters)))
    return np.random.Generator(np.random.Philox(ss))
