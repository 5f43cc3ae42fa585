"""Order-independent seeding.

Every random decision is drawn from a generator keyed on the run seed plus
the identity of the item being processed, so results never depend on the
order in which workers pick up jobs.
"""
import hashlib

import numpy as np


def hash64(*parts) -> int:
    """Stable 64-bit hash of the ``repr`` of each part."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def keyed_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(hash64(*parts)))
