"""Deterministic seed derivation.

A single 64-bit master seed drives every random draw in a run.  Module
seeds are derived with a stable hash of (master, purpose tag, index) so
results never depend on call order or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Derive a child seed from (master, tag, index) via SHA-256.

    Stable across platforms and Python versions (unlike hash()).
    """
    payload = f"{master_seed & _MASK64}:{tag}:{index}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator seeded from the derived (master, tag, index) seed."""
    return np.random.default_rng(derive_seed(master_seed, tag, index))
