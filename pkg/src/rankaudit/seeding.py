"""Hierarchical seed derivation.

Seeds are hashed from their path (master seed, judge id, run, pair, ...) so
adding a judge or a run never shifts anyone else's random stream.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from any sequence of ints and strings."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big") >> 1


def coin(seed: int) -> random.Random:
    """Cheap seeded generator for single draws."""
    return random.Random(seed)
