"""kNN graph structure augmentation.

Nodes with similar summed propagated features get extra edges: each node
selects its top-k cosine neighbors, the directed selections are
symmetrized by union, and the result is normalized (no self-loops, the
original normalized adjacency already carries them) and averaged with the
original to form the propagation graph actually used for training targets.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ConfigError
from .graph import SparseGraph, merge_half, sym_normalize
from .propagation import FeatureSet


def cosine_similarity_matrix(x: FeatureSet) -> np.ndarray:
    """All-pairs cosine similarity; zero-norm rows score 0 everywhere."""
    rows = x.rows.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    zero = norms == 0.0
    if np.any(zero):
        warnings.warn(
            f"{int(zero.sum())} zero-norm feature rows; their similarity to "
            "every node is 0 and their kNN picks the lowest-index nodes",
            stacklevel=2,
        )
    safe = np.where(zero, 1.0, norms)
    unit = rows / safe[:, None]
    sim = unit @ unit.T
    np.clip(sim, -1.0, 1.0, out=sim)
    return sim


def cosine_knn(x: FeatureSet, k: int) -> SparseGraph:
    """Union-symmetrized top-k cosine neighbor graph (binary weights).

    Ties break toward the smaller node index; self-edges are excluded, so
    every node has degree >= k in the output.
    """
    n = x.n
    if not 1 <= k < n:
        raise ConfigError(f"knn k must satisfy 1 <= k < n, got k={k}, n={n}")
    sim = cosine_similarity_matrix(x)
    np.fill_diagonal(sim, -np.inf)
    # stable sort on -sim: descending similarity, ties by ascending index
    order = np.argsort(-sim, axis=1, kind="stable")
    picked = order[:, :k]
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = picked.reshape(-1).astype(np.int64)
    pairs = np.stack([src, dst], axis=1)
    return _binary_union_graph(n, pairs)


def _binary_union_graph(n: int, pairs: np.ndarray) -> SparseGraph:
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
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


def build_augmented(g_norm: SparseGraph, knn: SparseGraph) -> SparseGraph:
    """Average the normalized original and normalized kNN adjacencies.

    The kNN graph is normalized without self-loops: ``g_norm`` already
    carries them, and adding them twice would over-weight self-information
    in the merged graph.
    """
    knn_norm = sym_normalize(knn, add_self_loops=False)
    return merge_half(g_norm, knn_norm)
