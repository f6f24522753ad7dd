"""Seed derivation and small shared helpers."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base_seed: int, name: str) -> int:
    """Stable named sub-seed so components stay independently reproducible."""
    digest = hashlib.sha256(f"{base_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(base_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, name))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
