"""Deterministic random-stream derivation.

All randomness in an experiment flows from one root seed. Components draw
from labeled substreams so that, e.g., re-seeding the probe does not
disturb noise injection, and per-node streams stay stable when more nodes
are appended.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels: object) -> int:
    """Derive a stable 64-bit seed from a root seed and a label path.

    Labels may be strings or integers. The derivation is a SHA-256 hash,
    so it is stable across platforms and Python processes.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("ascii"))
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(seed: int, *labels: object) -> np.random.Generator:
    """Generator seeded from the labeled substream of ``seed``."""
    return np.random.default_rng(derive_seed(seed, *labels))
