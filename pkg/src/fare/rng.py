"""Seed derivation and the uniform-driven Gaussian sampler.

Every random draw in an experiment comes from a named substream of one base
seed. Substreams are keyed by a tuple of small integers so that, for instance,
the perturbation stream of ensemble member 3 in round 2 of trial 7 can be
replayed without running anything else.
"""
from __future__ import annotations

import numpy as np

# stream tags; order is part of the reproducibility contract
DATASET = 0
SPLIT = 1
ROUND0 = 2
ROUND = 3
PERTURB = 4
SAMPLE = 5


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` standard normals from the uniform stream of ``rng``."""
    m = (size + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps the log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:size]
