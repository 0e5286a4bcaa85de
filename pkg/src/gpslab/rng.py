"""Reproducible random streams built on the counter-based Philox generator.

Estimators index work by sample: the stream for sample ``i`` is derived from
``(master_seed, i)`` alone, so shard assignment to workers never changes the
draws and merged results are independent of worker count.
"""

from __future__ import annotations

import numpy as np

RngLike = "int | np.random.Generator"


def generator(seed_or_gen) -> np.random.Generator:
    """Coerce an integer seed or an existing Generator into a Generator."""
    if isinstance(seed_or_gen, np.random.Generator):
        return seed_or_gen
    return np.random.Generator(np.random.Philox(key=np.uint64(int(seed_or_gen) & (2**64 - 1))))


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Stream for one sample, a pure function of (master_seed, index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def substreams(seed_or_gen, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent per-sample streams.

    Integer master seeds give the worker-independent (seed, index) mapping;
    a Generator is split through its own seed sequence as a fallback for
    callers that only hold a stream.
    """
    if isinstance(seed_or_gen, np.random.Generator):
        return list(seed_or_gen.spawn(n))
    return [substream(seed_or_gen, i) for i in range(n)]
