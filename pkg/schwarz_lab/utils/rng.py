"""
Counter-based random streams keyed by (seed, purpose, counters).
Streams are independent of call order and thread scheduling.
"""

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    """Stable 32-bit key for a purpose tag (unlike hash(), not salted per process)."""
    return zlib.crc32(purpose.encode('utf-8'))


def derive_rng(seed: int, purpose: str, *counters: int) -> np.random.Generator:
    """
    Create a Philox generator for one (seed, purpose, counters) key.

    Args:
        seed: Master seed of the experiment
        purpose: Tag naming what the stream is used for
        *counters: Further integers such as the step m or a node id

    Returns:
        Independent numpy Generator
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, purpose_key(purpose)]
    entropy.extend(int(c) for c in counters)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
