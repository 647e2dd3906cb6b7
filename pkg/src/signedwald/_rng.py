"""Seeded random streams with a fixed layout.

Every stream is a Philox (counter-based) generator keyed by a
``SeedSequence`` with an explicit ``spawn_key``, so a stream is determined
by ``(seed, key...)`` alone and never by the order in which work is
scheduled. Monte-Carlo draws are generated in blocks of ``BLOCK`` rows:
draw ``b`` comes from substream ``b // BLOCK``.
"""

from __future__ import annotations

import numpy as np

BLOCK = 1024


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit seed for the child ``(seed, key...)``."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def standard_normal_blocks(seed: int, draws: int, dim: int, *key: int) -> np.ndarray:
    """``draws x dim`` standard normals, block ``k`` from substream ``(key..., k)``."""
    out = np.empty((draws, dim))
    for k, start in enumerate(range(0, draws, BLOCK)):
        stop = min(start + BLOCK, draws)
        out[start:stop] = stream(seed, *key, k).standard_normal((stop - start, dim))
    return out
