"""Random sub-stream derivation.

Every stream in a run is derived from ``(seed, purpose, index)``. The purpose
tag is hashed with CRC-32 so the derivation is stable across processes and
Python versions (``hash()`` is salted).
"""

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def derive_seed_sequence(seed: int, purpose: str, index: int = 0) -> np.random.SeedSequence:
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return np.random.SeedSequence(entropy=seed, spawn_key=(purpose_key(purpose), index))


def derive_rng(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one purpose of one run."""
    return np.random.default_rng(derive_seed_sequence(seed, purpose, index))
