"""Deterministic seed derivation shared by every stochastic component.

All randomness flows through ``numpy.random.Generator`` objects seeded from
``derive_seed``.  Substream seeds are SHA-256 hashes of their label parts, so
a cell's stream depends only on its own identity, never on how many other
cells run or in what order.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "rng_from", "spawn_rng"]


def derive_seed(*parts) -> int:
    """Map an arbitrary tuple of labels to a stable 63-bit seed."""
    key = "|".join(_canonical(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _canonical(part) -> str:
    if isinstance(part, float):
        # repr is shortest round-trip, stable across platforms
        return repr(part)
    return str(part)


def rng_from(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn_rng(*parts) -> np.random.Generator:
    """Generator for the substream identified by the given labels."""
    return rng_from(derive_seed(*parts))
