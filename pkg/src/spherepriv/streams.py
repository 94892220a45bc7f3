"""Seeded random streams.

Every random draw in the package comes from a caller-owned
``numpy.random.Generator``. Batch code derives one substream per record by
hashing ``(seed, *keys)`` through ``SeedSequence`` so results do not depend
on how work is split across workers.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def substream(seed, *keys):
    """Independent generator for ``(seed, *keys)``; keys are non-negative ints."""
    entropy = [int(seed) & SEED_MASK, *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise TypeError("an explicit seed or Generator is required")
    return substream(rng)


def fingerprint(rng):
    """Short digest of a generator's current state."""
    state = rng.bit_generator.state
    return hashlib.sha256(repr(state).encode()).hexdigest()[:16]
