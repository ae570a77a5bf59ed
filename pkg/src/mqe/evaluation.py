"""Linear-probe classification, noise correlation report, and hop sweep.

The probe is a softmax regression classifier trained full-batch with Adam
on frozen embeddings. Each probe run retrains from a distinct seed and
picks its L2 strength from a fixed grid by validation accuracy; reported
accuracy is the mean and sample standard deviation of test accuracy over
runs. Splits default to a fresh 10/10/80 random split per run.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, EvalError
from .estimator import MqeModel, forward
from .graph import SparseGraph
from .noise import NoiseGroundTruth
from .optim import Adam
from .propagation import FeatureSet, propagate_stack
from .rng import derive_seed

L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)

PROBE_LR = 0.01
PROBE_EPOCHS = 300


@dataclass(frozen=True)
class Splits:
    """Disjoint train/val/test node index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            part = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, part)
            if part.ndim != 1 or part.size == 0:
                raise EvalError(f"{name} split must be a nonempty index list")
            if part.min() < 0:
                raise EvalError(f"{name} split contains a negative index")
            if np.unique(part).size != part.size:
                raise EvalError(f"{name} split contains duplicate indices")
        combined = np.concatenate([self.train, self.val, self.test])
        if np.unique(combined).size != combined.size:
            raise EvalError("splits overlap")


@dataclass(frozen=True)
class ProbeResult:
    accuracy_mean: float
    accuracy_std: float
    runs: int
    chosen_l2: float


@dataclass(frozen=True)
class NoiseReport:
    """Estimated hop-0 sigma against true per-node noise intensity.

    Correlations cover only nodes whose true intensity is positive. When
    either side is constant on that set the correlations are undefined;
    ``degenerate`` is set and both values are None.
    """

    sigma0: np.ndarray
    s_true: np.ndarray
    pearson: Optional[float]
    spearman: Optional[float]
    degenerate: bool = False


def make_splits(n: int, seed: int, train_frac: float = 0.1,
                val_frac: float = 0.1) -> Splits:
    """Random disjoint splits; remaining nodes after train/val go to test."""
    if not (0 < train_frac and 0 < val_frac and train_frac + val_frac < 1):
        raise ConfigError("split fractions must be positive and sum below 1")
    n_train = int(np.floor(train_frac * n + 0.5))
    n_val = int(np.floor(val_frac * n + 0.5))
    if n_train < 1 or n_val < 1 or n_train + n_val >= n:
        raise EvalError(f"cannot split {n} nodes into "
                        f"{train_frac:g}/{val_frac:g}/rest")
    order = np.random.default_rng(seed).permutation(n)
    return Splits(train=np.sort(order[:n_train]),
                  val=np.sort(order[n_train:n_train + n_val]),
                  test=np.sort(order[n_train + n_val:]))


def fit_softmax(x: np.ndarray, y: np.ndarray, n_classes: int, l2: float,
                seed: int, lr: float = PROBE_LR,
                epochs: int = PROBE_EPOCHS):
    """Train softmax regression with Adam; returns (weights, bias, trace).

    Loss is mean cross-entropy plus l2 * 0.5 * ||W||^2; the trace records
    it before each update.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    m, dim = x.shape
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=(dim, n_classes))
    bias = np.zeros(n_classes)
    onehot = np.zeros((m, n_classes))
    onehot[np.arange(m), y] = 1.0
    opt = Adam({"w": weights, "b": bias}, lr=lr)
    trace = []
    for _ in range(epochs):
        logits = x @ weights + bias
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        ce = -np.mean(np.log(probs[np.arange(m), y] + 1e-300))
        trace.append(ce + l2 * 0.5 * float(np.sum(weights ** 2)))
        g_logit = (probs - onehot) / m
        opt.step({"w": x.T @ g_logit + l2 * weights,
                  "b": g_logit.sum(axis=0)})
    return weights, bias, trace


def _accuracy(x, y, weights, bias) -> float:
    pred = np.argmax(x @ weights + bias, axis=1)
    return float(np.mean(pred == y))


def probe(embeddings: np.ndarray, labels: np.ndarray,
          splits: Optional[Splits] = None, runs: int = 5,
          seed: int = 0) -> ProbeResult:
    """Repeatedly train the linear probe and aggregate test accuracy.

    With ``splits=None`` each run draws its own 10/10/80 split; a provided
    ``Splits`` is reused by every run, which then differ only in the
    classifier seed. ``chosen_l2`` is the modal grid choice across runs
    (ties broken toward the smaller strength).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise EvalError("embeddings must be n x f with one label per row")
    if runs < 1:
        raise ConfigError("probe runs must be >= 1")
    n = x.shape[0]
    n_classes = int(y.max()) + 1
    accuracies = []
    chosen = []
    for run in range(runs):
        sp = splits if splits is not None else \
            make_splits(n, derive_seed(seed, "splits", run))
        if sp.train.max() >= n or sp.val.max() >= n or sp.test.max() >= n:
            raise EvalError("split index out of range for embeddings")
        y_train = y[sp.train]
        if np.unique(y_train).size < 2:
            raise EvalError("train split contains a single class")
        best = None
        for grid_idx, l2 in enumerate(L2_GRID):
            weights, bias, _ = fit_softmax(
                x[sp.train], y_train, n_classes, l2,
                derive_seed(seed, "probe", run, grid_idx))
            val_acc = _accuracy(x[sp.val], y[sp.val], weights, bias)
            if best is None or val_acc > best[0]:
                best = (val_acc, l2, weights, bias)
        _, l2, weights, bias = best
        accuracies.append(_accuracy(x[sp.test], y[sp.test], weights, bias))
        chosen.append(l2)
    mean = float(np.mean(accuracies))
    std = float(np.std(accuracies, ddof=1)) if runs > 1 else 0.0
    counts = Counter(chosen)
    modal = min(counts, key=lambda l2: (-counts[l2], l2))
    return ProbeResult(accuracy_mean=mean, accuracy_std=std, runs=runs,
                       chosen_l2=modal)


def pearson(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Pearson correlation, or None when either side has zero variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise EvalError("correlation inputs must be equal-length vectors")
    da = a - a.mean()
    db = b - b.mean()
    ss = float(da @ da) * float(db @ db)
    if ss == 0.0:
        return None
    return float((da @ db) / np.sqrt(ss))


def spearman(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Rank correlation (average ranks for ties), None when degenerate."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise EvalError("correlation inputs must be equal-length vectors")
    return pearson(rankdata(a), rankdata(b))


def correlation_report(model: MqeModel,
                       ground_truth: NoiseGroundTruth) -> NoiseReport:
    """Compare the hop-0 sigma estimates against true noise intensity."""
    sigma0 = np.asarray(forward(model, 0).sigma, dtype=np.float64)
    s_true = np.asarray(ground_truth.intensity, dtype=np.float64)
    if sigma0.shape != s_true.shape:
        raise EvalError("model and ground truth cover different node counts")
    idx = np.flatnonzero(s_true > 0)
    if idx.size == 0:
        raise EvalError("no perturbed nodes to correlate against")
    r_p = pearson(sigma0[idx], s_true[idx])
    r_s = spearman(sigma0[idx], s_true[idx])
    degenerate = r_p is None or r_s is None
    return NoiseReport(sigma0=sigma0, s_true=s_true,
                       pearson=r_p, spearman=r_s, degenerate=degenerate)


def hop_sweep(g_norm: SparseGraph, x: FeatureSet, labels: np.ndarray,
              splits: Optional[Splits], l_max: int, runs: int = 5,
              seed: int = 0) -> list:
    """Probe each propagation depth 0..l_max independently."""
    if l_max < 0:
        raise ConfigError("l_max must be >= 0")
    stack = propagate_stack(g_norm, x, l_max)
    return [probe(stack.layer(level), labels, splits, runs, seed)
            for level in range(l_max + 1)]


def hop_sweep_csv_lines(results) -> list:
    lines = ["hop,accuracy_mean,accuracy_std"]
    for level, res in enumerate(results):
        lines.append(f"{level},{res.accuracy_mean:.12g},"
                     f"{res.accuracy_std:.12g}")
    return lines


def write_hop_sweep_csv(path, results) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(hop_sweep_csv_lines(results)) + "\n")
