"""Deterministic seed derivation for parallel Monte Carlo streams."""

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags keep per-mode and per-sample derivations disjoint.
MODE_STREAM = 0
SAMPLE_STREAM = 1


def derive_seed(base_seed: int, *key: int) -> int:
    """Hash (base_seed, key) into a fresh 64-bit seed.

    Built on numpy's SeedSequence so derived streams are independent of
    each other and of the schedule that consumes them: worker count and
    execution order never change the draws.
    """
    ss = np.random.SeedSequence(
        int(base_seed) & _MASK64, spawn_key=tuple(int(k) for k in key)
    )
    return int(ss.generate_state(1, np.uint64)[0])


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & _MASK64)
