"""Deterministic derivation of independent random streams.

Every random draw in the simulator comes from a generator derived from the
experiment seed plus a path of integer/string keys (run index, node id, time
step, iteration, purpose tag).  Streams derived from distinct paths are
independent, and the same path always yields the same stream, so results do
not depend on evaluation order or on how work is split across processes.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"stream keys must be int or str, got {type(key).__name__}")


def substream(seed: int, *path) -> np.random.Generator:
    """Generator for the stream identified by (seed, *path)."""
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(_key_to_int(k) for k in path)
    return np.random.default_rng(np.random.SeedSequence(entropy))
