"""Deterministic seed fan-out.

A single global seed spawns per-stage, per-class, per-trajectory numpy
Generators through SeedSequence entropy lists: (seed, stage tag, *path).
Identical (seed, path) always yields the identical stream, and distinct
paths are statistically independent, so stages and classes can run in any
order (or in parallel) without changing results.
"""

from __future__ import annotations

import numpy as np

STAGE_BENCH = 1
STAGE_DISCOVER = 2
STAGE_ALIGN = 3
STAGE_EVAL = 4
STAGE_SCORE_MODEL = 5


def rng_for(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(p) for p in path]])
