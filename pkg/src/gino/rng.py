"""Seeded random streams.

All randomness in the toolkit flows from one root seed through named
sub-streams, so dataset generation, parameter init and per-epoch sampling
are independently reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator for the sub-stream `name` (optionally indexed, e.g. per epoch)."""
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(index)))
    return np.random.default_rng(ss)
