"""Seed splitting: one independent 64-bit stream seed per (master seed, stream index)."""

import numpy as np


# Stream index ranges per purpose; index = base + k for the k-th item.
SIMULATION_STREAMS = 0
RECONSTRUCTION_STREAMS = 100_000
TEST_PHANTOM_STREAM = 200_000
TRAINING_SET_STREAM = 200_001
TRAINING_STREAM = 200_002


def stream_seed(master_seed: int, stream_index: int) -> int:
    """
    Derive the seed for one stream (a realization, a reconstruction, an augmentation draw).

    The rule is SeedSequence([master_seed, stream_index]) -> first uint64 word, so
    seeds are reproducible from the manifest alone and streams never overlap.
    """
    state = np.random.SeedSequence([master_seed, stream_index]).generate_state(1, np.uint64)
    return int(state[0])


def stream_rng(master_seed: int, stream_index: int) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master_seed, stream_index))
