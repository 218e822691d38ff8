"""Deterministic random streams keyed by (seed, purpose, indices)."""

from __future__ import annotations

import numpy as np

# Purpose tags keep streams for different consumers disjoint.
SINGLE = 0
MULTI = 1
CALIBRATION = 2
GM = 3


def resolve_seed(seed) -> int:
    """Turn ``None`` into a fresh non-negative integer seed."""
    if seed is None:
        return int(np.random.SeedSequence().generate_state(1)[0])
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return seed


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys)))
