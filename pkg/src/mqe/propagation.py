"""Non-parameterized multi-hop feature propagation.

Each hop multiplies the feature matrix by a normalized adjacency, so
layer l of the stack equals (normalized adjacency)^l applied to the input
features. All layers are kept: they are the targets the per-hop quality
estimators are trained against. Arithmetic is double precision; hop counts
up to 16 compound rounding otherwise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .graph import SparseGraph


@dataclass(frozen=True)
class FeatureSet:
    """Dense n x d node feature matrix of finite reals."""

    rows: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {self.rows.shape}")
        if not np.all(np.isfinite(self.rows)):
            raise InputError("features must be finite")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class PropagatedStack:
    """Stack of propagated feature layers, layer 0 being the input."""

    layers: np.ndarray  # (hops + 1, n, d) float64

    def __post_init__(self):
        if self.layers.ndim != 3 or self.layers.shape[0] < 1:
            raise InputError(f"stack must be (hops+1, n, d), got {self.layers.shape}")

    @property
    def hops(self) -> int:
        return self.layers.shape[0] - 1

    @property
    def n(self) -> int:
        return self.layers.shape[1]

    @property
    def d(self) -> int:
        return self.layers.shape[2]

    def layer(self, level: int) -> np.ndarray:
        return self.layers[level]


def propagate_stack(g: SparseGraph, x: FeatureSet, hops: int) -> PropagatedStack:
    """Iterated sparse propagation: layer l = adjacency^l applied to x.

    ``g`` is expected to carry normalized weights (spectral radius <= 1);
    the iteration itself accepts any weighted symmetric graph.
    """
    if hops < 0:
        raise InputError(f"hop count must be nonnegative, got {hops}")
    if g.n != x.n:
        raise InputError(f"graph has {g.n} nodes but features have {x.n} rows")
    layers = np.empty((hops + 1, x.n, x.d), dtype=np.float64)
    layers[0] = x.rows.astype(np.float64)
    a = g.to_scipy()
    for level in range(1, hops + 1):
        layers[level] = a @ layers[level - 1]
    return PropagatedStack(layers=layers)


def summed_features(stack: PropagatedStack) -> FeatureSet:
    """Elementwise sum of all layers (hop 0 through the last)."""
    return FeatureSet(rows=stack.layers.sum(axis=0))


def read_features(path) -> FeatureSet:
    """Parse a text feature matrix, one node per line.

    An optional first line '#n d' declares the expected shape and is
    validated against the parsed body.
    """
    path = Path(path)
    expect = None
    rows = []
    width = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if lineno == 1 and stripped.startswith("#"):
                fields = stripped[1:].split()
                if len(fields) != 2:
                    raise InputError(f"{path.name}:1: header must be '#n d'")
                expect = (int(fields[0]), int(fields[1]))
                continue
            if not stripped:
                continue
            fields = stripped.split()
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise InputError(
                    f"{path.name}:{lineno}: expected {width} values, got {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise InputError(
                    f"{path.name}:{lineno}: non-numeric feature value"
                ) from None
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.size == 0:
        raise InputError(f"{path.name}: no feature rows")
    if expect is not None and matrix.shape != expect:
        raise InputError(
            f"{path.name}: header declares {expect[0]}x{expect[1]} but body is "
            f"{matrix.shape[0]}x{matrix.shape[1]}"
        )
    if not np.all(np.isfinite(matrix)):
        raise InputError(f"{path.name}: non-finite feature value")
    return FeatureSet(rows=matrix)


def write_features(path, x: FeatureSet, header: bool = True) -> None:
    """Write a text feature matrix (repr precision, lossless round trip)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"#{x.n} {x.d}\n")
        for row in x.rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_stack(path, stack: PropagatedStack) -> None:
    """Binary stack export: three little-endian u64 (layers, n, d), then
    row-major float32 data."""
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<QQQ", stack.layers.shape[0], stack.n, stack.d))
        fh.write(stack.layers.astype("<f4").tobytes(order="C"))


def read_stack(path) -> PropagatedStack:
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(24)
        if len(head) != 24:
            raise InputError(f"{path.name}: truncated stack header")
        levels, n, d = struct.unpack("<QQQ", head)
        body = np.frombuffer(fh.read(), dtype="<f4")
    if body.size != levels * n * d:
        raise InputError(
            f"{path.name}: expected {levels * n * d} values, got {body.size}"
        )
    layers = body.reshape(levels, n, d).astype(np.float64)
    return PropagatedStack(layers=layers)
