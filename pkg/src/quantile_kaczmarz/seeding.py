"""Seeded random streams.

Every consumer of randomness asks for a stream by ``(seed, role, *keys)``.
Streams are Philox (counter-based) generators keyed through a
``SeedSequence`` so that adding a new role never perturbs existing ones and
results do not depend on the order in which streams are created.
"""
from __future__ import annotations

import zlib

import numpy as np

ROLES = {
    "matrix": 1,
    "support": 2,
    "corruption": 3,
    "x_star": 4,
    "solver": 5,
    "stream": 6,
    "trial": 7,
    "probe": 8,
}

_MASK64 = (1 << 64) - 1


def _key(value) -> int:
    if isinstance(value, str):
        return zlib.crc32(value.encode())
    return int(value) & _MASK64


def stream(seed: int, role: str, *keys) -> np.random.Generator:
    if role not in ROLES:
        raise KeyError(f"unknown random stream role {role!r}")
    entropy = [_key(seed), ROLES[role], *(_key(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit child seed, stable across platforms and numpy versions."""
    entropy = [_key(seed), *(_key(k) for k in keys)]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0]
    return int(state) >> 1


def unit_vector(rng: np.random.Generator, n: int) -> np.ndarray:
    """A point drawn uniformly from the unit sphere in R^n."""
    while True:
        g = rng.standard_normal(n)
        nrm = np.linalg.norm(g)
        if nrm > 0:
            return g / nrm
