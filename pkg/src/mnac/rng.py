"""Counter-based random streams keyed by (seed, purpose, indices).

Every stream is a Philox generator whose 128-bit key is derived from the
master seed and a path of small integers, so a draw depends only on where it
is used and never on how many other streams were opened before it.
"""

from __future__ import annotations

import numpy as np

# stream purposes
SIGNATURE = 1
MESSAGE = 2
ACTIVITY = 3
NOISE = 4
RESAMPLE = 5
CODEBOOK = 6


def stream(seed: int, *path: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
