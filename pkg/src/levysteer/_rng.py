"""Deterministic 64-bit mixing used for seed derivation, sign draws and digests.

Pure integer arithmetic so results are identical across platforms and runs.
"""

from __future__ import annotations

import hashlib

_M64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def derive_seed(root: int, *indices: int) -> int:
    """Derive a child seed from a root seed and a tuple of indices."""
    h = mix64(root & _M64)
    for k in indices:
        h = mix64(h ^ mix64(k & _M64))
    return h


def sign_from(seed: int, p: int, q: int) -> int:
    """Pseudorandom sign in {-1,+1}, a pure function of (seed, p, q)."""
    h = mix64((seed & _M64) ^ mix64((p * 0xC2B2AE3D27D4EB4F) & _M64) ^ mix64((q * 0x165667B19E3779F9) & _M64))
    return 1 if h & 1 else -1


def stable_hash64(data: bytes) -> int:
    """64-bit stable content hash (blake2b truncation)."""
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "big")
