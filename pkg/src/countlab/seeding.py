"""Deterministic seed derivation for pipeline stages."""

import hashlib


def derive_seed(seed: int, label: str) -> int:
    """Mix a stage label into the global seed.

    Uses SHA-256 so the mapping is stable across platforms and Python
    versions; returns a 64-bit unsigned integer suitable for seeding
    ``numpy.random.default_rng``.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
