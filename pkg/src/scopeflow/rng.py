"""Deterministic random streams.

Every random draw in the package goes through a numpy Generator backed
by the counter-based Philox bit generator. The same 64-bit seed yields
the same draw sequence on every platform (for a fixed numpy version),
which is what makes batch plans and CLI outputs byte-reproducible.
"""

from __future__ import annotations

import numpy as np

# Child seeds handed to workers stay below 2**63 so that they survive a
# round trip through JSON readers that only handle signed 64-bit ints.
MAX_CHILD_SEED = 2**63


def make_rng(seed: int) -> np.random.Generator:
    """Create a Philox-backed generator from a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_seeds(rng: np.random.Generator, n: int) -> tuple[int, ...]:
    """Draw ``n`` independent child seeds from ``rng``."""
    return tuple(int(s) for s in rng.integers(0, MAX_CHILD_SEED, size=n))
