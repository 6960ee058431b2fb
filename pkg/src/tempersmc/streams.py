"""Counter-based random streams for reproducible particle runs.

Every random draw in a sampler run is derived from a Philox stream keyed
by ``(run seed, iteration index, purpose tag)``.  Within one stream the
draws for particle ``i`` occupy fixed counter offsets (row ``i`` of the
block generated for that iteration), so the realized run is a pure
function of the seed and is bit-identical however the per-particle work
is scheduled.  Resampling draws come from their own tag and act as the
sequential barrier between iterations.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RunStreams"]

# Purpose tags; a (iteration, tag) pair addresses one stream.
TAG_INIT = 0
TAG_RESAMPLE = 1
TAG_MOVE = 2
TAG_JITTER = 3
TAG_BATCH = 4

_TAG_BITS = 8


class RunStreams:
    """Factory of per-(iteration, purpose) generators for one run."""

    def __init__(self, seed):
        seed = int(seed)
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self.seed = seed

    def generator(self, iteration, tag) -> np.random.Generator:
        """Fresh generator for the given iteration and purpose tag."""
        if iteration < 0 or tag < 0 or tag >= (1 << _TAG_BITS):
            raise ValueError(f"bad stream address ({iteration}, {tag})")
        key = np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, (int(iteration) << _TAG_BITS) | int(tag)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))
