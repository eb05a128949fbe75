"""Deterministic seed derivation.

All randomness in the toolkit flows through numpy SeedSequence keyed by
integer tuples, so results are independent of evaluation order and thread
schedule.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or not 0 <= seed < MAX_SEED:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def seed_sequence(*keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([check_seed(k) for k in keys])


def derive_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(*keys))


def derive_seed(*keys: int) -> int:
    """A 64-bit integer seed derived from the key tuple."""
    return int(seed_sequence(*keys).generate_state(1, np.uint64)[0])


def derive_states(seed: int, count: int) -> np.ndarray:
    """`count` uint64 stream states derived from one seed (counter-based split)."""
    return seed_sequence(seed).generate_state(count, np.uint64)
