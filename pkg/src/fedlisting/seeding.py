"""Deterministic hierarchical seed derivation.

Every random decision in the lab draws from a generator seeded via
``derive_seed(base, *path)``.  The derivation is a keyed hash, so results do
not depend on call order, thread scheduling, or Python's hash randomization.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(base: int, *path) -> int:
    """Derive a 64-bit child seed from a base seed and a label path.

    Path elements may be ints or strings; they are joined into a canonical
    byte string and hashed, so ``derive_seed(7, "shadow", "EQUAL", 3)`` is
    stable across platforms and sessions.
    """
    key = "/".join(str(p) for p in path)
    payload = f"{int(base) & _MASK64}:{key}".encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_from(base: int, *path) -> np.random.Generator:
    """Generator seeded from ``derive_seed(base, *path)``."""
    return np.random.default_rng(derive_seed(base, *path))
