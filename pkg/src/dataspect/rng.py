"""Deterministic seed derivation so one root seed drives every stage."""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, *tags) -> int:
    """Derive a child seed from a root seed and a stage path.

    Tags are hashed with CRC32 so the derivation is stable across platforms
    and Python processes (unlike the builtin hash()).
    """
    entropy = [int(root) & _MASK64]
    entropy.extend(zlib.crc32(str(t).encode("utf-8")) for t in tags)
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & _MASK64)
