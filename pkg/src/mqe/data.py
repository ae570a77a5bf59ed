"""Dataset directories and the synthetic planted-partition benchmark.

A dataset lives in a directory of plain-text files: ``edges.txt``,
``features.txt``, and ``labels.txt`` are required; ``clean_features.txt``,
``noise_mask.txt``, ``intensity.txt``, and ``splits.txt`` are optional and
carry noise ground truth and fixed evaluation splits. Loading validates
everything and points errors at the offending file and line.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, InputError
from .evaluation import Splits
from .graph import SparseGraph, from_edge_list, read_edge_list, write_edge_list
from .noise import NoiseGroundTruth
from .propagation import FeatureSet, read_features, write_features
from .rng import derive_rng

EDGES_FILE = "edges.txt"
FEATURES_FILE = "features.txt"
LABELS_FILE = "labels.txt"
CLEAN_FILE = "clean_features.txt"
MASK_FILE = "noise_mask.txt"
INTENSITY_FILE = "intensity.txt"
SPLITS_FILE = "splits.txt"


@dataclass(frozen=True)
class DatasetBundle:
    graph: SparseGraph            # raw adjacency, no self-loops
    features: FeatureSet
    labels: np.ndarray            # (n,) int64 class ids
    clean_features: Optional[FeatureSet] = None
    ground_truth: Optional[NoiseGroundTruth] = None
    splits: Optional[Splits] = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        n = self.graph.n
        if self.features.n != n:
            raise InputError(
                f"feature rows ({self.features.n}) != graph nodes ({n})")
        if labels.shape != (n,):
            raise InputError(f"expected {n} labels, got {labels.shape}")
        if labels.size and labels.min() < 0:
            raise InputError("labels must be nonnegative class ids")
        if self.clean_features is not None and (
                self.clean_features.n != n or
                self.clean_features.d != self.features.d):
            raise InputError("clean features shape mismatch")
        if self.ground_truth is not None and \
                self.ground_truth.mask.shape != (n,):
            raise InputError("noise ground truth length mismatch")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


@dataclass(frozen=True)
class SbmSpec:
    """Planted-partition graph with Gaussian class-mean features."""

    n: int = 600
    classes: int = 3
    p_in: float = 0.05
    p_out: float = 0.005
    d: int = 64
    class_sep: float = 1.0
    within_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.classes < 1 or self.d < 1:
            raise ConfigError("n, classes, and d must be positive")
        if self.classes > self.n:
            raise ConfigError("more classes than nodes")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ConfigError(
                f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, "
                f"p_out={self.p_out}")
        if self.class_sep < 0 or self.within_std < 0:
            raise ConfigError("class_sep and within_std must be >= 0")


def gen_sbm(spec: SbmSpec) -> DatasetBundle:
    """Generate a planted-partition bundle; deterministic in spec.seed.

    Node i gets label (i * classes) // n, so classes form contiguous,
    near-equal blocks. Pairs inside a class connect with p_in, across
    classes with p_out. Features are class mean plus within-class noise;
    the clean copy is retained on the bundle.
    """
    n, classes = spec.n, spec.classes
    labels = (np.arange(n, dtype=np.int64) * classes) // n

    rng = derive_rng(spec.seed, "sbm", "edges")
    pairs = []
    for i in range(n - 1):
        p_row = np.where(labels[i + 1:] == labels[i], spec.p_in, spec.p_out)
        hits = np.flatnonzero(rng.random(n - 1 - i) < p_row)
        pairs.extend((i, int(i + 1 + j)) for j in hits)
    graph = from_edge_list(n, pairs)

    means = spec.class_sep * derive_rng(spec.seed, "sbm", "means") \
        .standard_normal((classes, spec.d))
    rows = means[labels] + spec.within_std * \
        derive_rng(spec.seed, "sbm", "features").standard_normal((n, spec.d))
    features = FeatureSet(rows)
    return DatasetBundle(graph=graph, features=features, labels=labels,
                         clean_features=FeatureSet(rows.copy()))


def _read_int_lines(path, what: str) -> np.ndarray:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                values.append(int(text))
            except ValueError:
                raise InputError(
                    f"{path}:{lineno}: expected an integer {what}, "
                    f"got {text!r}") from None
    return np.asarray(values, dtype=np.int64)


def _read_float_lines(path, what: str) -> np.ndarray:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise InputError(
                    f"{path}:{lineno}: expected a number {what}, "
                    f"got {text!r}") from None
    return np.asarray(values, dtype=np.float64)


def read_splits_file(path) -> Splits:
    """Parse three lines: "train: ...", "val: ...", "test: ..."."""
    parts = {}
    expected = ("train", "val", "test")
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) != 3:
        raise InputError(f"{path}: expected 3 lines (train/val/test), "
                         f"got {len(lines)}")
    for lineno, (key, line) in enumerate(zip(expected, lines), start=1):
        prefix = key + ":"
        if not line.startswith(prefix):
            raise InputError(f"{path}:{lineno}: expected line to start "
                             f"with {prefix!r}")
        try:
            parts[key] = np.array(
                [int(tok) for tok in line[len(prefix):].split()],
                dtype=np.int64)
        except ValueError:
            raise InputError(
                f"{path}:{lineno}: split indices must be integers") from None
    return Splits(train=parts["train"], val=parts["val"], test=parts["test"])


def write_splits_file(path, splits: Splits) -> None:
    with open(path, "w") as fh:
        for key in ("train", "val", "test"):
            idx = getattr(splits, key)
            fh.write(f"{key}: " + " ".join(str(int(i)) for i in idx) + "\n")


def load_dataset(directory) -> DatasetBundle:
    """Load and validate a dataset directory."""
    def req(name):
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            raise InputError(f"{directory}: missing required file {name}")
        return path

    def opt(name):
        path = os.path.join(directory, name)
        return path if os.path.isfile(path) else None

    features = read_features(req(FEATURES_FILE))
    n = features.n
    graph = read_edge_list(req(EDGES_FILE), n)
    labels_path = req(LABELS_FILE)
    labels = _read_int_lines(labels_path, "class id")
    if labels.shape != (n,):
        raise InputError(f"{labels_path}: expected {n} labels, "
                         f"got {labels.size}")
    if labels.size and labels.min() < 0:
        raise InputError(f"{labels_path}: negative class id")

    clean = None
    clean_path = opt(CLEAN_FILE)
    if clean_path:
        clean = read_features(clean_path)

    ground_truth = None
    mask_path, intensity_path = opt(MASK_FILE), opt(INTENSITY_FILE)
    if (mask_path is None) != (intensity_path is None):
        raise InputError(f"{directory}: {MASK_FILE} and {INTENSITY_FILE} "
                         "must be present together")
    if mask_path:
        mask_raw = _read_int_lines(mask_path, "0/1 flag")
        if mask_raw.shape != (n,):
            raise InputError(f"{mask_path}: expected {n} flags, "
                             f"got {mask_raw.size}")
        bad = np.flatnonzero((mask_raw != 0) & (mask_raw != 1))
        if bad.size:
            raise InputError(f"{mask_path}: flag at node {bad[0]} is "
                             f"{mask_raw[bad[0]]}, expected 0 or 1")
        intensity = _read_float_lines(intensity_path, "intensity")
        if intensity.shape != (n,):
            raise InputError(f"{intensity_path}: expected {n} values, "
                             f"got {intensity.size}")
        if intensity.min() < 0 or not np.all(np.isfinite(intensity)):
            raise InputError(f"{intensity_path}: intensities must be "
                             "finite and >= 0")
        ground_truth = NoiseGroundTruth(
            mask=mask_raw.astype(bool), intensity=intensity, clean=clean)

    splits = None
    splits_path = opt(SPLITS_FILE)
    if splits_path:
        splits = read_splits_file(splits_path)
        for name in ("train", "val", "test"):
            idx = getattr(splits, name)
            if idx.max() >= n:
                raise InputError(f"{splits_path}: {name} index "
                                 f"{idx.max()} out of range for {n} nodes")

    return DatasetBundle(graph=graph, features=features, labels=labels,
                         clean_features=clean, ground_truth=ground_truth,
                         splits=splits)


def save_dataset(directory, bundle: DatasetBundle) -> None:
    """Write a bundle back out; optional members are written when present."""
    os.makedirs(directory, exist_ok=True)
    write_edge_list(os.path.join(directory, EDGES_FILE), bundle.graph)
    write_features(os.path.join(directory, FEATURES_FILE), bundle.features)
    with open(os.path.join(directory, LABELS_FILE), "w") as fh:
        for label in bundle.labels:
            fh.write(f"{int(label)}\n")
    if bundle.clean_features is not None:
        write_features(os.path.join(directory, CLEAN_FILE),
                       bundle.clean_features)
    if bundle.ground_truth is not None:
        with open(os.path.join(directory, MASK_FILE), "w") as fh:
            for flag in bundle.ground_truth.mask:
                fh.write(f"{int(flag)}\n")
        with open(os.path.join(directory, INTENSITY_FILE), "w") as fh:
            for value in bundle.ground_truth.intensity:
                fh.write(f"{float(value)!r}\n")
    if bundle.splits is not None:
        write_splits_file(os.path.join(directory, SPLITS_FILE),
                          bundle.splits)
