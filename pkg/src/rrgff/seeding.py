"""Deterministic seed splitting.

Every random quantity in the package is drawn from a Philox generator whose
key is ``sub_seed(master, index)``.  The mix is SplitMix64 applied to
``master + GOLDEN * (index + 1)`` modulo 2**64, so any implementation can
reproduce the stream keys from the master seed alone.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sub_seed(master: int, index: int) -> int:
    """64-bit child seed for stream ``index`` of ``master``."""
    return splitmix64((int(master) + GOLDEN * (int(index) + 1)) & MASK64)


def stream(master: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator for stream ``index`` of ``master``."""
    return np.random.Generator(np.random.Philox(key=sub_seed(master, index)))


# named sub-streams so stages never share randomness
STAGE_GRAPH = 1
STAGE_SAMPLE = 2
STAGE_PROBE = 3
STAGE_MC = 4


def stage_seed(master: int, stage: int) -> int:
    return sub_seed(master, (stage << 32))
