"""Per-replica random streams.

Every replica draws from its own PCG64 generator whose seed is a splitmix64
hash of (master seed, stream tag, replica index).  Results therefore depend
only on those three integers, never on how replicas are scheduled.
"""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def replica_seed(master, index, tag=0):
    h = splitmix64(int(master) & _MASK)
    h = splitmix64(h ^ (int(tag) & _MASK))
    return splitmix64(h ^ (int(index) & _MASK))


def replica_rng(master, index, tag=0):
    return np.random.Generator(np.random.PCG64(replica_seed(master, index, tag)))


def as_rng(seed):
    """Accept an int seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return replica_rng(seed, 0)


def stream_tag(*parts):
    """Stable 64-bit tag from a tuple of strings and numbers."""
    h = 0x243F6A8885A308D3
    for part in parts:
        for byte in repr(part).encode():
            h = splitmix64(h ^ byte)
    return h
