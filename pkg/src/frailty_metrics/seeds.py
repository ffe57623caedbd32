"""Deterministic seed derivation for independent RNG streams.

Streams are keyed by hashed tuples such as (master_seed, repeat, case_id) so
that adding repeats or reordering work never reshuffles existing draws.
"""

import hashlib

import numpy as np

_U64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Hash a tuple of ints/strings into a stable 64-bit seed."""
    payload = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator from a (possibly signed) 64-bit seed."""
    return np.random.default_rng(seed & _U64)
