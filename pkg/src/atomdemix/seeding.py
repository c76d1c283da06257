"""Deterministic seed derivation for Monte Carlo trials.

Every randomized routine takes an explicit seed; trial-level seeds are
derived from (master, index) so results are reproducible regardless of
execution order or worker count.
"""

import numpy as np


def derive_seed_sequence(master: int, *indices: int) -> np.random.SeedSequence:
    """Mix a master seed with trial/stage indices into a SeedSequence."""
    return np.random.SeedSequence([int(master), *[int(i) for i in indices]])


def derived_rng(master: int, *indices: int) -> np.random.Generator:
    """Generator seeded by hash of (master, indices); independent per index."""
    return np.random.default_rng(derive_seed_sequence(master, *indices))
