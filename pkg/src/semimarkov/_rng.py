"""Seeded random streams.

Every replication draws from its own Philox stream keyed by
``SeedSequence(seed, spawn_key=(replication,))``, so a replication's
output does not depend on which other replications are run or in which
order.
"""

import numpy as np

GENERATOR_ID = "numpy-philox4x64/seedsequence-spawn-key-v1"


def replication_rng(seed, replication=0):
    """Return the generator for replication ``replication`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication),))
    return np.random.Generator(np.random.Philox(ss))


def replication_uniforms(seed, replication, size):
    return replication_rng(seed, replication).random(size)
