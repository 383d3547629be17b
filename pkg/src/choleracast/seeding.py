"""Derive independent, reproducible random streams from one global seed."""
import zlib

import numpy as np


def label_seed(seed: int, label: str) -> int:
    """Deterministic 63-bit seed for the stream named ``label``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode())])
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1 << 31, 1], dtype=np.uint64)) & ((1 << 63) - 1)


def stream(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(label_seed(seed, label))
