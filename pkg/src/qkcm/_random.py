"""Per-trajectory random substreams.

Each trajectory draws from a Philox (counter-based) generator keyed by
``(master_seed, trajectory_index)``, so results do not depend on how
trajectories are scheduled across workers.
"""

import numpy as np


def substream(master_seed: int, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def open_unit(rng: np.random.Generator) -> float:
    """Uniform draw on the open interval (0, 1)."""
    r = rng.random()
    while r == 0.0:
        r = rng.random()
    return r
