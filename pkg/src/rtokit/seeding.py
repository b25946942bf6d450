"""Named, counter-based random streams derived from one master seed.

Every source of randomness in a run draws from its own stream so that
results are reproducible and independent of worker count or evaluation
order.  Streams are identified by name; per-item substreams (for example
one per proposal) append an index to the spawn key.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "data-noise": 0,
    "design": 1,
    "init": 2,
    "proposals": 3,
    "mh-uniforms": 4,
}


def stream_seq(master_seed: int, name: str, *indices: int) -> np.random.SeedSequence:
    if name not in STREAMS:
        raise ValueError(f"unknown stream {name!r}; expected one of {sorted(STREAMS)}")
    master_seed = int(master_seed)
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    return np.random.SeedSequence(master_seed, spawn_key=(STREAMS[name], *map(int, indices)))


def stream_rng(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(stream_seq(master_seed, name, *indices))
