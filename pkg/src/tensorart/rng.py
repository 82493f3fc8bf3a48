"""Seed splitting.

Every random stream is derived from one 64-bit root seed through
``numpy.random.SeedSequence(seed, spawn_key=(chain, purpose))`` and fed to a
PCG64 bit generator. The purpose codes are fixed so that a given
``(seed, chain, purpose)`` triple always yields the same stream.
"""
from __future__ import annotations

import numpy as np

PURPOSES = {
    "data": 0,
    "model": 1,
    "init": 2,
    "sampler": 3,
    "irf": 4,
    "test": 5,
}


def make_rng(seed: int, chain: int = 0, purpose: str = "sampler") -> np.random.Generator:
    if purpose not in PURPOSES:
        raise ValueError(f"unknown rng purpose {purpose!r}; expected one of {sorted(PURPOSES)}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=(int(chain), PURPOSES[purpose]))
    return np.random.Generator(np.random.PCG64(ss))
