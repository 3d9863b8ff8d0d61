"""Deterministic random streams.

Every source of randomness in the package flows through :func:`stream`, a
counter-based Philox generator keyed by SHA-256 of ``(seed, *labels)``.
Philox's output is specified bit-for-bit by numpy independent of platform,
so any pipeline is reproducible from its integer seed alone, and labelled
sub-streams are independent without seed bookkeeping.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *labels: int | str) -> int:
    """128-bit Philox key derived from a seed and stream labels."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:16], "little")


def stream(seed: int, *labels: int | str) -> np.random.Generator:
    """Independent generator for the sub-stream named by ``labels``."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *labels)))
