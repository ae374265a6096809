"""Reproducible, splittable random streams.

Every stochastic component draws from a counter-based Philox generator
keyed by (seed, *stream).  Distinct stream tuples give statistically
independent streams, so parallel replicas never share randomness and the
merge order of their results cannot matter.
"""

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return an independent generator keyed by (seed, *stream)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))
