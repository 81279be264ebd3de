"""Reproducible per-chain random streams.

A single 64-bit master seed fans out to any number of chains by running the
SplitMix64 sequence: chain i gets the i-th output of the generator seeded at
the master value, and that output seeds an independent numpy Generator.
Chains built this way are order-independent, so an ensemble gives identical
results whether chains run sequentially or on a worker pool.
"""

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer: one avalanche pass over a 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def chain_seed(master_seed: int, chain_index: int) -> int:
    """Seed for chain `chain_index` derived from `master_seed`.

    The state advances by the SplitMix64 golden increment once per chain
    index before finalizing, so nearby indices land far apart.
    """
    if chain_index < 0:
        raise ValueError("chain_index must be nonnegative")
    state = (master_seed + (chain_index + 1) * _GOLDEN) & _MASK64
    return splitmix64(state)


def chain_rng(master_seed: int, chain_index: int) -> np.random.Generator:
    """Independent numpy Generator for one chain of an ensemble."""
    return np.random.default_rng(chain_seed(master_seed, chain_index))
