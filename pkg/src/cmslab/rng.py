"""Labeled counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *labels)``. Sample ``i`` of a stream always reads the
same position of that stream, so results do not depend on how work is split.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *labels) -> np.ndarray:
    text = "\x1f".join([str(int(seed))] + [str(l) for l in labels]).encode()
    digest = hashlib.blake2b(text, digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


def stream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for the sub-stream named by *labels*."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))


def uniforms(seed: int, n: int, *labels) -> np.ndarray:
    return stream(seed, *labels).random(n)
