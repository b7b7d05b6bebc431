"""Seeded random streams.

Every random draw in the package comes from one 64-bit master seed split
into independent Philox (counter-based) streams, one per purpose, so that
e.g. the subset sequence of a solver run does not depend on how many
random numbers the data generator consumed.
"""

import numpy as np

DATA = 0
SUBSETS = 1
POWER = 2
NOISE = 3
LABELS = 4
BENCH = 5


def stream(seed, purpose, *sub):
    """Return a Generator for ``(seed, purpose, *sub)``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose),) + tuple(int(s) for s in sub))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, purpose, *sub):
    """A child 64-bit seed, used to record per-run seeds in bench output."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose),) + tuple(int(s) for s in sub))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
