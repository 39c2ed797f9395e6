"""
Counter-based random streams.

Every replicate gets its own Philox stream keyed by (master_seed, index), so a
replicate's draws never depend on how the replicates are split across workers.
"""

import numpy as np


def replicate_stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate `index` of an experiment seeded with `master_seed`."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seq))


def auxiliary_stream(master_seed: int, label: int) -> np.random.Generator:
    """Stream for non-replicate draws (scan proxies, Monte Carlo moments), disjoint from replicate keys."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(2**32, label))
    return np.random.Generator(np.random.Philox(seq))
