"""Seeded random streams; one independent stream per (seed, index)."""
from __future__ import annotations

import numpy as np


def stream(seed: int, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, index)])))
