"""Reproducible random streams.

Every stochastic input in a run draws from its own PCG64 stream, keyed by
``(seed, purpose)``. Workload sampling and per-chunk perturbation therefore
never share state: changing the PE count reorders perturbation draws but
leaves sampled task costs untouched.
"""

from __future__ import annotations

import zlib

import numpy as np

WORKLOAD = "workload"
PERTURBATION = "perturbation"


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Return a fresh generator for ``purpose`` under ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(_tag(purpose),))
    return np.random.Generator(np.random.PCG64(seq))


def replication_seed(master_seed: int, rep: int) -> int:
    """Derive the run seed of replication ``rep`` from a master seed."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(rep),))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
