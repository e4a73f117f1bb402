"""Deterministic stream derivation from one master seed.

Every consumer derives its generator as PCG64(SeedSequence([seed, stream])),
with streams: 0 learning, 1 evaluation, 2 loss estimation. Replications and
sweep cells never share draws because each run owns one stream and consumes
it strictly left to right.
"""

import numpy as np

STREAM_LEARN = 0
STREAM_EVAL = 1
STREAM_LOSS = 2


def seeded_rng(seed: int, stream: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))
