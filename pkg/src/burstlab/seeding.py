"""Deterministic RNG streams.

Every random draw in the toolkit comes from a counter-based Philox
generator keyed by (master_seed, *stream_path), so results are independent
of execution order and worker count. Regime-path sampling owns stream 0 of
each trajectory; bootstrap replicates live in their own domain.
"""

from __future__ import annotations

import numpy as np

STREAM_REGIME = 0
# spawn-key domain separating bootstrap replicate streams from trajectories
DOMAIN_BOOTSTRAP = 0xB0075
# domain for synthetic-data helpers in tests and sweeps
DOMAIN_SYNTHETIC = 0x5F00D


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by (master_seed, *path)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))


def trajectory_stream(master_seed: int, trajectory_index: int, stream_id: int) -> np.random.Generator:
    return substream(master_seed, trajectory_index, stream_id)


def bootstrap_stream(master_seed: int, replicate_index: int) -> np.random.Generator:
    return substream(master_seed, DOMAIN_BOOTSTRAP, replicate_index)
