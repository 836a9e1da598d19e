"""Counter-based random streams.

Every draw comes from numpy's Philox4x64-10 generator keyed by the run seed.
The 256-bit counter is positioned at ``[0, 0, index, purpose]`` so the stream
for (seed, purpose, index) is a pure function of those three integers: the
noise at step t never depends on how many variates were consumed elsewhere.
Bit-exact output is pinned to numpy's Philox and its normal sampler
(ziggurat), i.e. it is reproducible for a fixed numpy version.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

NOISE = 1
PUBLIC_SHUFFLE = 2
PRIVATE_SHUFFLE = 3
INIT = 4
SPLIT = 5
DATA = 6
PROBE = 7


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    bitgen = np.random.Philox(key=int(seed) & MASK64, counter=[0, 0, int(index) & MASK64, purpose])
    return np.random.Generator(bitgen)


def derive_seed(master: int, *path: int) -> int:
    """Independent 64-bit seed for a (master, cell, repeat, ...) path."""
    ss = np.random.SeedSequence([int(master) & MASK64, *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])
