"""Reproducible random streams.

Every stream is a PCG64 generator seeded from ``SeedSequence(seed, spawn_key=key)``
where ``key`` is a tuple of non-negative integers.  The key layout used across the
package is::

    (replication, role, index)

with ``role`` one of the integer constants below and ``index`` the observation
number ``t`` (dataset generation) or the replicate number ``b`` (bootstrap).
Streams with different keys are statistically independent, so replications can
be run in any order or in parallel and still produce identical results.
"""
from __future__ import annotations

import zlib

import numpy as np

ROLE_SIGNAL = 0
ROLE_COMMON_NOISE = 1
ROLE_INDIVIDUAL_NOISE = 2
ROLE_BOOTSTRAP = 3
ROLE_DESIGN = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def label_id(label: str) -> int:
    """Stable 32-bit id for a text label (scenario names, grid rows)."""
    return zlib.crc32(label.encode("utf-8"))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
