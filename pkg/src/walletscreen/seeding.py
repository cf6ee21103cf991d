"""Seed derivation: every random stream comes from one master seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, component: str, index: int = 0) -> int:
    """Hash ``(master, component, index)`` into a 63-bit seed.

    Sub-seeds depend only on their own coordinates, so re-running one stage
    (or one tree) reproduces the same stream as a full run.
    """
    digest = hashlib.sha256(f"{int(master)}:{component}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng_for(master: int, component: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, component, index))
