"""Synthetic feature corruption with per-node ground truth.

A noise pass picks round(alpha * n) victim nodes and adds scaled noise to
their feature rows. Each victim draws from its own seeded stream, so the
noise a node receives does not depend on which other nodes were picked or
on the graph size. The returned ground truth records the victim mask, the
clean rows, and a per-node intensity: the root mean square change of the
row, which is 0 exactly for untouched nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, InputError
from .propagation import FeatureSet
from .rng import derive_rng

NOISE_KINDS = ("normal", "uniform")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "normal"
    alpha: float = 0.1        # fraction of nodes to corrupt, in (0, 1]
    beta: float = 1.0         # noise scale
    seed: int = 0
    uniform_low: float = 0.0  # uniform kind only
    uniform_high: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(
                f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(
                f"noise alpha must be in (0, 1], got {self.alpha}")
        if self.beta < 0.0:
            raise ConfigError(f"noise beta must be >= 0, got {self.beta}")
        if self.uniform_high <= self.uniform_low:
            raise ConfigError("uniform_high must exceed uniform_low")


@dataclass(frozen=True)
class NoiseGroundTruth:
    mask: np.ndarray       # (n,) bool, True for corrupted nodes
    intensity: np.ndarray  # (n,) float64, RMS feature change per node
    clean: Optional[FeatureSet] = None  # original features, if known

    @property
    def perturbed(self) -> np.ndarray:
        """Indices of corrupted nodes, ascending."""
        return np.flatnonzero(self.mask)


def victim_count(n: int, alpha: float) -> int:
    """round(alpha * n) with ties away from zero, so 0.5 rounds up."""
    return int(np.floor(alpha * n + 0.5))


def intensity(x_clean: FeatureSet, x_noisy: FeatureSet) -> np.ndarray:
    """Per-node RMS deviation between two feature sets; 0 iff rows match."""
    if x_clean.rows.shape != x_noisy.rows.shape:
        raise InputError(
            f"feature shapes differ: {x_clean.rows.shape} vs "
            f"{x_noisy.rows.shape}")
    diff = np.asarray(x_noisy.rows, dtype=np.float64) \
        - np.asarray(x_clean.rows, dtype=np.float64)
    return np.sqrt(np.mean(diff * diff, axis=1))


def inject(x: FeatureSet, spec: NoiseSpec):
    """Corrupt a copy of the features; returns (noisy, ground truth)."""
    clean = np.asarray(x.rows, dtype=np.float64)
    n, d = clean.shape
    count = victim_count(n, spec.alpha)
    order = derive_rng(spec.seed, "noise", "select").permutation(n)
    victims = np.sort(order[:count])

    noisy = clean.copy()
    for node in victims:
        rng = derive_rng(spec.seed, "noise", int(node))
        if spec.kind == "normal":
            delta = spec.beta * rng.standard_normal(d)
        else:
            delta = spec.beta * rng.uniform(
                spec.uniform_low, spec.uniform_high, size=d)
        noisy[node] += delta

    mask = np.zeros(n, dtype=bool)
    mask[victims] = True
    clean_set = FeatureSet(clean.copy())
    noisy_set = FeatureSet(noisy)
    truth = NoiseGroundTruth(mask=mask,
                             intensity=intensity(clean_set, noisy_set),
                             clean=clean_set)
    return noisy_set, truth
