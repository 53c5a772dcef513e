import zlib
from typing import List

import numpy as np


def derive_seed_sequence(seed: int, purpose: str, *keys: int) -> np.random.SeedSequence:
    entropy: List[int] = [int(seed), zlib.crc32(purpose.encode("utf-8"))]
    entropy.extend(int(k) for k in keys)
    return np.random.SeedSequence(entropy)


def derive_rng(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """
        Independent generator for one (purpose, keys) stream of a run.

        Every random draw of the engine comes from a stream keyed by what it is
        for (selection, rollout, crossover...) and where (iteration, indices), so
        neither thread scheduling nor resuming from a checkpoint changes it.
    """
    return np.random.default_rng(derive_seed_sequence(seed, purpose, *keys))
