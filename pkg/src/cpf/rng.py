"""Deterministic random-stream derivation.

Every stochastic stage (splitting, parameter init, dropout, ...) draws from
its own generator derived from the master seed and a fixed stream label, so
changing one stage never perturbs the draws of another.
"""

from __future__ import annotations

import numpy as np

# Stream ids are part of the reproducibility contract: never renumber.
_STREAMS = {
    "split": 1,
    "teacher-init": 2,
    "teacher-dropout": 3,
    "student-init": 4,
    "student-dropout": 5,
    "grid": 6,
    "data": 7,
}


def derive_rng(seed: int, stream: str) -> np.random.Generator:
    """Return the generator for `stream` under master `seed`."""
    try:
        stream_id = _STREAMS[stream]
    except KeyError:
        raise ValueError(f"unknown rng stream {stream!r}") from None
    return np.random.default_rng((int(seed), stream_id))
