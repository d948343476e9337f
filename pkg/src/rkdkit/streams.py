"""Reproducible random streams.

Every stochastic component derives its generator from an integer master seed
plus a structural path (replication index, bootstrap row, ...). Streams built
from the same (seed, path) are bit-identical no matter how work is scheduled
across processes, which is what makes simulation studies and bootstrap
ensembles reproducible under parallelism.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator for the stream addressed by (seed, *path)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """A stable integer sub-seed for the given path (for nested components)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
