"""Stable seed derivation.

Python's builtin ``hash`` is salted per process, so every derived seed in the
pipeline goes through SHA-256 instead. Identical inputs give identical seeds
on any machine, which is what makes whole datasets reproducible from a single
master seed.
"""

import hashlib

_MASK64 = (1 << 64) - 1


def stable_hash64(*parts) -> int:
    """Hash a tuple of strings, ints, or raw bytes to a 64-bit integer."""
    h = hashlib.sha256()
    for part in parts:
        h.update(part if isinstance(part, bytes) else str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big")


def derive_seed(master_seed: int, *parts) -> int:
    """Per-item seed: a pure function of the master seed and the item key."""
    return stable_hash64(master_seed, *parts)


def text_hash64(text: str) -> int:
    """64-bit content hash of a string (used for style hashes and cache keys)."""
    return stable_hash64(text)


def mix64(a: int, b: int) -> int:
    """Combine two integers into one 64-bit value, order-sensitively."""
    return stable_hash64(a & _MASK64, b & _MASK64)
