"""Keyed RNG streams.

Every random decision in the engine draws from a stream addressed by a
tuple of integers (seed, tag, ...). Streams with different keys are
independent, and a stream's content depends only on its key, so any worker
can recompute any sample in any order and get identical bytes.
"""

from __future__ import annotations

import numpy as np

# Domain-separation tags; never reuse a value.
TAG_PLAN = 1
TAG_SHUFFLE = 2
TAG_STAGE = 3
TAG_PROBE = 4
TAG_SYNTH = 5
TAG_BENCH = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for the given (seed, *key) address."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
