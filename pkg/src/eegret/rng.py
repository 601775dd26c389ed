"""Deterministic random streams.

All randomness in the package (init, shuffling, dropout, synthetic data)
flows from one integer seed through named Philox streams, so every run is
a pure function of its config.  Stream names are hashed with crc32, which
is stable across platforms and Python versions (unlike ``hash``).
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def stream(seed: int, *tags) -> np.random.Generator:
    """Counter-based generator for the stream named by ``tags``.

    Identical (seed, tags) always yields an identical generator; distinct
    tags yield statistically independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *tags) -> int:
    """Collapse (seed, tags) into a single integer sub-seed."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
