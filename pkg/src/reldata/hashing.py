"""Deterministic hashing and seed derivation.

Every piece of randomness in the toolkit flows from a single master seed
through these functions, so re-runs are byte-identical regardless of
worker count or platform.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

_MASK64 = (1 << 64) - 1

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over raw bytes."""
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _MASK64
    return h


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 mixer; spreads structured seeds into good ones."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def content_hash64(text: str) -> int:
    """Stable 64-bit content hash of a unicode string (keyed blake2b, C speed)."""
    return int.from_bytes(
        hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big"
    )


def content_id(text: str) -> str:
    """Content hash rendered as a fixed-width 16-char hex id."""
    return f"{content_hash64(text):016x}"


def derive_seed(master_seed: int, *parts: str) -> int:
    """Per-record seed: SplitMix64(master XOR content hash of the joined parts)."""
    return splitmix64((master_seed & _MASK64) ^ content_hash64("\x1f".join(parts)))


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
