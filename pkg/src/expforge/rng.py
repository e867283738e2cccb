"""Deterministic RNG substreams.

Every random decision in the pipeline flows from one master seed through a
named substream, so individual stages can be re-run in isolation and whole
runs replay byte-for-byte.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator derived from (seed, name), stable across platforms."""
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, tag]))
