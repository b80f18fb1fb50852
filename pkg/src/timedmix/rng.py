"""Seeded random streams.

Every stochastic routine in the package draws from a Philox generator
(counter-based, 64-bit seeded). Independent sub-streams are keyed by
hashing ``(seed, tag, index)`` with BLAKE2b, so parallel trials never
share a stream and results do not depend on execution order.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed, tag, index=0):
    """Return a 64-bit seed for the sub-stream ``(seed, tag, index)``."""
    msg = f"{int(seed) & _MASK64}:{tag}:{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def make_rng(seed, tag="root", index=0):
    """Philox generator keyed by the hashed ``(seed, tag, index)`` triple."""
    msg = f"{int(seed) & _MASK64}:{tag}:{int(index)}".encode()
    key = int.from_bytes(hashlib.blake2b(msg, digest_size=16).digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))
