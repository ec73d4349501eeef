"""Deterministic per-batch random streams.

Batch b of a run with a given seed always gets the same generator,
independent of worker count or execution order.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, batch: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(batch,))
    return np.random.Generator(np.random.PCG64(ss))
