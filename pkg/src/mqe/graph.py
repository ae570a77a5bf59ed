"""Sparse undirected weighted graphs in CSR form.

Storage is a plain CSR triple (row offsets, column indices, float64
weights). Graphs are immutable after construction and validated on
construction: sorted rows, in-range indices, finite weights, and symmetry
up to ``SYMMETRY_TOL``. scipy.sparse is used for the algebra (addition,
normalization, transposition); the CSR arrays remain the canonical
storage.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class SparseGraph:
    """Symmetric weighted adjacency in CSR form.

    Attributes:
        n: node count.
        indptr: row offsets, shape (n + 1,), int64.
        indices: column indices, sorted strictly increasing per row, int64.
        weights: edge weights, finite float64, same length as indices.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n, indptr, indices, weights = self.n, self.indptr, self.indices, self.weights
        if n < 0:
            raise InputError(f"node count must be nonnegative, got {n}")
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise InputError("malformed CSR row offsets")
        if np.any(np.diff(indptr) < 0):
            raise InputError("CSR row offsets must be non-decreasing")
        if len(indices) != len(weights):
            raise InputError("indices and weights length mismatch")
        if len(indices) > 0:
            if indices.min() < 0 or indices.max() >= n:
                raise InputError("column index out of range")
            # strictly increasing inside each row; row boundaries exempt
            # (empty trailing rows put offsets at len(indices): no entry)
            row_start = np.zeros(len(indices), dtype=bool)
            starts = indptr[1:-1]
            row_start[starts[starts < len(indices)]] = True
            interior = ~row_start[1:]
            if np.any(np.diff(indices)[interior] <= 0):
                raise InputError("column indices must be strictly increasing per row")
        if not np.all(np.isfinite(weights)):
            raise InputError("graph weights must be finite")
        self._check_symmetry()

    def _check_symmetry(self):
        a = self.to_scipy()
        t = a.T.tocsr()
        t.sort_indices()
        same_pattern = (
            np.array_equal(a.indptr, t.indptr) and np.array_equal(a.indices, t.indices)
        )
        if not same_pattern or (
            len(a.data) > 0 and np.max(np.abs(a.data - t.data)) > SYMMETRY_TOL
        ):
            raise InputError("adjacency is not symmetric")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    @property
    def edge_count(self) -> int:
        """Number of stored undirected edges (self-loops count once)."""
        diag = int(np.sum(self.row_of_each_entry() == self.indices))
        return (self.nnz + diag) // 2

    def row_of_each_entry(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    def degrees(self) -> np.ndarray:
        """Structural degree: number of stored entries per row."""
        return np.diff(self.indptr).astype(np.int64)

    def weighted_degrees(self) -> np.ndarray:
        """Per-row weight sums."""
        return self.to_scipy() @ np.ones(self.n)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.weights, self.indices, self.indptr), shape=(self.n, self.n)
        )

    @classmethod
    def from_scipy(cls, a: sp.spmatrix) -> "SparseGraph":
        csr = a.tocsr().copy()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(
            n=csr.shape[0],
            indptr=csr.indptr.astype(np.int64),
            indices=csr.indices.astype(np.int64),
            weights=csr.data.astype(np.float64),
        )


def from_edge_list(n: int, pairs) -> SparseGraph:
    """Build a binary undirected adjacency from (u, v) index pairs.

    Duplicate edges and explicit self-loops are dropped; self-loops are
    added later, once, by normalization.
    """
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if arr.size > 0 and (arr.min() < 0 or arr.max() >= n):
        bad = np.where((arr < 0) | (arr >= n))[0][0]
        raise InputError(
            f"edge {bad}: node id {arr[bad].max()} out of range [0, {n})"
        )
    u, v = arr[:, 0], arr[:, 1]
    keep = u != v
    lo = np.minimum(u[keep], v[keep])
    hi = np.maximum(u[keep], v[keep])
    if len(lo) > 0:
        uniq = np.unique(lo * np.int64(n) + hi)
        lo, hi = uniq // n, uniq % n
    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return SparseGraph(n=n, indptr=indptr, indices=cols,
                       weights=np.ones(len(cols), dtype=np.float64))


def sym_normalize(g: SparseGraph, add_self_loops: bool = True) -> SparseGraph:
    """Symmetric degree normalization D^{-1/2} (A [+ I]) D^{-1/2}.

    With self-loops on, every node keeps at least its own signal, so
    isolated nodes are legal. Without them a zero-degree row has no valid
    normalization and is rejected.
    """
    a = g.to_scipy().astype(np.float64)
    if add_self_loops:
        a = (a + sp.identity(g.n, format="csr", dtype=np.float64)).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        node = int(np.where(deg <= 0)[0][0])
        raise InputError(
            f"node {node} has zero degree; normalization without self-loops "
            "requires degree >= 1"
        )
    dinv = sp.diags(1.0 / np.sqrt(deg))
    out = (dinv @ a @ dinv).tocsr()
    out.sort_indices()
    return SparseGraph.from_scipy(out)


def merge_half(g1: SparseGraph, g2: SparseGraph) -> SparseGraph:
    """Entrywise average of two weighted adjacencies (union pattern)."""
    if g1.n != g2.n:
        raise InputError(f"node count mismatch: {g1.n} vs {g2.n}")
    return SparseGraph.from_scipy((g1.to_scipy() + g2.to_scipy()) * 0.5)


def read_edge_list(path, n: int) -> SparseGraph:
    """Parse a text edge list: one 'u v' pair per line, '#' lines ignored."""
    path = Path(path)
    pairs = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split()
            if len(fields) != 2:
                raise InputError(
                    f"{path.name}:{lineno}: expected two node ids, got "
                    f"{len(fields)} fields"
                )
            try:
                pairs.append((int(fields[0]), int(fields[1])))
            except ValueError:
                raise InputError(
                    f"{path.name}:{lineno}: node ids must be integers"
                ) from None
    try:
        return from_edge_list(n, pairs)
    except InputError as exc:
        raise InputError(f"{path.name}: {exc}") from None


def write_edge_list(path, g: SparseGraph) -> None:
    """Write one 'u v' line per undirected edge, u <= v, row order."""
    rows = g.row_of_each_entry()
    with Path(path).open("w", encoding="utf-8") as fh:
        for u, v in zip(rows, g.indices):
            if u <= v:
                fh.write(f"{u} {v}\n")
