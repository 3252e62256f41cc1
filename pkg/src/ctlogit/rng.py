"""Deterministic RNG substreams.

Every stochastic subsystem draws from ``default_rng([seed, TAG, *index])``
where TAG is a fixed integer unique to the subsystem. Streams are therefore
independent of call order and of how many draws other subsystems consume,
which is what makes reruns byte-identical and lets replicate r be
regenerated in isolation.
"""

from __future__ import annotations

import numpy as np

# Subsystem tags. Never renumber; doing so silently changes every seeded
# output downstream.
TAG_IMPUTATION = 11
TAG_BOOTSTRAP = 21
TAG_SIMULATION = 31
TAG_SYNTHETIC = 41
TAG_TABLE_REDRAW = 51


def substream(seed: int, tag: int, *index: int) -> np.random.Generator:
    """Generator for one (subsystem, index) pair under a master seed."""
    return np.random.default_rng([int(seed), int(tag), *[int(i) for i in index]])
