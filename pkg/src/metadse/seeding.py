"""Stable seed derivation so every stage owns an independent, reproducible stream."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *parts) -> int:
    """Collapse (root, tags...) into a u64 via sha256; stable across runs and platforms."""
    text = f"{int(root)}|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root: int, *parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root, *parts)))
