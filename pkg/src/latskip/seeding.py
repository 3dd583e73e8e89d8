"""Deterministic derivation of every RNG stream from one integer seed.

Each consumer gets its own named stream so that adding draws to one part
of the system never perturbs another. Streams are spawned from
``SeedSequence(seed, spawn_key=(stream_id, index))``.
"""

from __future__ import annotations

import numpy as np

STREAMS = {
    "env": 0,
    "eval_env": 1,
    "init": 2,
    "replay": 3,
    "augment": 4,
    "policy": 5,
    "distractor": 6,
    "analysis": 7,
    "stats": 8,
}


def rng_for(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    try:
        stream_id = STREAMS[stream]
    except KeyError:
        raise KeyError(f"unknown rng stream {stream!r}; known: {sorted(STREAMS)}") from None
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_id, index)))
