"""Counter-based seed splitting.

Every random stream in the package is addressed by ``(master_seed, *key)``
so results never depend on the order in which work is scheduled.
"""

from __future__ import annotations

import numpy as np

# stream identifiers, part of every spawn key
STREAM_INIT = 1
STREAM_CV = 2
STREAM_BOOT = 3
STREAM_SIM = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return a generator for the substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
