"""Keyed random streams.

Every stochastic step draws from a generator derived from the master seed and
a tuple of integer keys, so a work item's randomness never depends on which
other items ran, or in what order.
"""

from __future__ import annotations

import numpy as np

# stream-purpose tags
PROPENSITY = 1
DESIGN = 2
OUTCOME = 3
DATA = 4
BOOTSTRAP = 5
METHOD = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def grid_key(b: float) -> int:
    """Integer key for a grid value (micro-units, so 0.5 and 0.50 coincide)."""
    return int(round(float(b) * 1_000_000))
