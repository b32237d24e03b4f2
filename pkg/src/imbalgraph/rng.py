"""Seeded random number streams.

Every stochastic operation in this package draws from a Philox counter-based
generator, keyed by an explicit 64-bit seed plus a per-purpose stream id.
Philox output is platform- and word-order independent, and uniform doubles
come from the 53-bit mantissa construction, so a (seed, stream) pair produces
bit-identical draws everywhere. Different purposes sharing one user seed get
decorrelated streams instead of replaying the same sequence.
"""

import numpy as np

# Stream ids; appending new ones is fine, renumbering breaks reproducibility.
STREAM_SPLIT = 1
STREAM_PLAN = 2
STREAM_TRAIN = 3
STREAM_SYNTH = 4
STREAM_EDGE_SPLIT = 5
STREAM_SUBSAMPLE = 6
STREAM_JITTER = 7
STREAM_EDGE_NEG = 8
STREAM_EDGE_EVAL = 9


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Return the canonical generator for (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(stream)))))
