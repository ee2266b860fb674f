"""Named random streams derived from one master seed.

Each logical random decision (a permutation, a partition draw, a bin split)
reads from its own stream, keyed by the master seed plus a tuple of labels.
Adding a new stream never perturbs the draws of an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_BITS = 64


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**SEED_BITS:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return int(label)
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _sequence(seed, labels) -> np.random.SeedSequence:
    key = tuple(_label_key(x) for x in labels)
    return np.random.SeedSequence(check_seed(seed), spawn_key=key)


def stream(seed, *labels) -> np.random.Generator:
    """Generator for the stream named ``labels`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, labels)))


def derive_seed(seed, *labels) -> int:
    """A fresh 64-bit master seed for a sub-computation."""
    lo, hi = _sequence(seed, labels).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def uniform_below(rng: np.random.Generator, bound: int, size=None):
    """Exact uniform integers in ``[0, bound)``, including bounds beyond int64."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    if bound < 2**62:
        return rng.integers(0, bound, size=size, dtype=np.int64)
    nbytes = (bound.bit_length() + 7) // 8
    limit = (256**nbytes // bound) * bound

    def one():
        while True:
            x = int.from_bytes(rng.bytes(nbytes), "little")
            if x < limit:
                return x % bound

    if size is None:
        return one()
    return np.array([one() for _ in range(int(np.prod(size)))], dtype=object).reshape(size)
