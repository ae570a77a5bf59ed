"""Per-node feature quality estimation via conditional Gaussian heads.

Every node owns a learnable meta-representation row. For each propagation
depth a pair of two-layer perceptrons maps that row to a reconstruction of
the node's propagated features (mean head) and to a scalar quality score
(sigma head). Training minimizes the Gaussian negative log-likelihood of
the propagated features under these per-node, per-depth distributions; the
meta matrix doubles as the learned node embedding.

All gradients are computed in closed form. For the per-node loss term

    s / (2 * sigma^2) + c * log(sigma),    s = ||mu - x||^2,

the derivatives are d/dmu = (mu - x) / sigma^2 and
d/dsigma = -s / sigma^3 + c / sigma, chained through
sigma = softplus(t) + floor via d sigma / d t = expit(t). The coefficient
c is the feature width by default (exact likelihood up to constants), 1
when ``log_sigma_per_dim`` is off, and 0 when the regularizer is disabled.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, InputError, NumericalError
from .optim import Adam
from .propagation import PropagatedStack

DEFAULT_SIGMA_FLOOR = 1e-3

_EMB_MAGIC = struct.Struct("<QQ")


@dataclass
class HopEstimator:
    """Perceptron pair (mean head, sigma head) for one propagation depth."""

    mean_w1: np.ndarray   # (meta_dim, hidden_dim)
    mean_b1: np.ndarray   # (hidden_dim,)
    mean_w2: np.ndarray   # (hidden_dim, feat_dim)
    mean_b2: np.ndarray   # (feat_dim,)
    sigma_w1: np.ndarray  # (meta_dim, hidden_dim)
    sigma_b1: np.ndarray  # (hidden_dim,)
    sigma_w2: np.ndarray  # (hidden_dim, 1)
    sigma_b2: np.ndarray  # (1,)


@dataclass
class MqeModel:
    """Meta-representation matrix plus one estimator pair per depth."""

    meta: np.ndarray                      # (n, meta_dim)
    estimators: list[HopEstimator]
    sigma_floor: float = DEFAULT_SIGMA_FLOOR

    @property
    def n(self) -> int:
        return self.meta.shape[0]

    @property
    def meta_dim(self) -> int:
        return self.meta.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.estimators[0].mean_w1.shape[1]

    @property
    def feat_dim(self) -> int:
        return self.estimators[0].mean_w2.shape[1]

    @property
    def hops(self) -> int:
        return len(self.estimators) - 1

    def parameters(self) -> dict:
        """Named views of every trainable array (no copies)."""
        out = {"meta": self.meta}
        for level, est in enumerate(self.estimators):
            out[f"hop{level}.mean.w1"] = est.mean_w1
            out[f"hop{level}.mean.b1"] = est.mean_b1
            out[f"hop{level}.mean.w2"] = est.mean_w2
            out[f"hop{level}.mean.b2"] = est.mean_b2
            out[f"hop{level}.sigma.w1"] = est.sigma_w1
            out[f"hop{level}.sigma.b1"] = est.sigma_b1
            out[f"hop{level}.sigma.w2"] = est.sigma_w2
            out[f"hop{level}.sigma.b2"] = est.sigma_b2
        return out


@dataclass(frozen=True)
class HopEstimate:
    mu: np.ndarray     # (n, feat_dim)
    sigma: np.ndarray  # (n,), >= sigma_floor


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    last_hop_only: bool = False       # fit only the deepest hop
    sigma_regularizer: bool = True    # include the log(sigma) penalty
    log_sigma_per_dim: bool = True    # weight it by the feature width


def _log_sigma_coeff(feat_dim: int, cfg: TrainConfig) -> float:
    if not cfg.sigma_regularizer:
        return 0.0
    return float(feat_dim) if cfg.log_sigma_per_dim else 1.0


def _hop_range(model: MqeModel, cfg: TrainConfig) -> range:
    if cfg.last_hop_only:
        return range(model.hops, model.hops + 1)
    return range(model.hops + 1)


def init_model(n: int, feat_dim: int, meta_dim: int, hidden_dim: int,
               hops: int, seed: int, sigma_floor: float = DEFAULT_SIGMA_FLOOR,
               dtype=np.float32) -> MqeModel:
    """Build a model with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.

    Biases start at zero. The draw order is fixed (meta matrix, then per
    depth: mean w1, mean w2, sigma w1, sigma w2) so a seed pins every
    parameter regardless of dtype.
    """
    if min(n, feat_dim, meta_dim, hidden_dim) < 1:
        raise ConfigError("model dimensions must be positive")
    if hops < 0:
        raise ConfigError("hops must be >= 0")
    if sigma_floor <= 0:
        raise ConfigError("sigma_floor must be > 0")
    rng = np.random.default_rng(seed)

    def draw(rows: int, cols: int, fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)

    meta = draw(n, meta_dim, meta_dim)
    estimators = []
    for _ in range(hops + 1):
        estimators.append(HopEstimator(
            mean_w1=draw(meta_dim, hidden_dim, meta_dim),
            mean_b1=np.zeros(hidden_dim, dtype=dtype),
            mean_w2=draw(hidden_dim, feat_dim, hidden_dim),
            mean_b2=np.zeros(feat_dim, dtype=dtype),
            sigma_w1=draw(meta_dim, hidden_dim, meta_dim),
            sigma_b1=np.zeros(hidden_dim, dtype=dtype),
            sigma_w2=draw(hidden_dim, 1, hidden_dim),
            sigma_b2=np.zeros(1, dtype=dtype),
        ))
    return MqeModel(meta=meta, estimators=estimators, sigma_floor=sigma_floor)


def _forward_hop(model: MqeModel, level: int):
    """Forward pass for one depth, returning the caches backward needs."""
    est = model.estimators[level]
    z = model.meta
    pre_mu = z @ est.mean_w1 + est.mean_b1
    hid_mu = np.maximum(pre_mu, 0.0)
    mu = hid_mu @ est.mean_w2 + est.mean_b2
    pre_sg = z @ est.sigma_w1 + est.sigma_b1
    hid_sg = np.maximum(pre_sg, 0.0)
    t = (hid_sg @ est.sigma_w2).ravel() + est.sigma_b2[0]
    t64 = t.astype(np.float64)
    sigma = np.logaddexp(t64, 0.0) + model.sigma_floor
    return pre_mu, hid_mu, mu, pre_sg, hid_sg, t64, sigma


def forward(model: MqeModel, level: int) -> HopEstimate:
    """Estimate (mu, sigma) for one propagation depth."""
    if not 0 <= level <= model.hops:
        raise ConfigError(f"hop level {level} outside 0..{model.hops}")
    *_, mu, _, _, _, sigma = _forward_hop(model, level)
    return HopEstimate(mu=mu, sigma=sigma)


def _check_targets(model: MqeModel, targets: PropagatedStack) -> None:
    want = (model.hops + 1, model.n, model.feat_dim)
    if targets.layers.shape != want:
        raise InputError(
            f"target stack shape {targets.layers.shape} does not match "
            f"model shape {want}")


def hop_estimates(model: MqeModel) -> list:
    """Forward every depth; estimates[l] pairs with stack layer l."""
    return [forward(model, level) for level in range(model.hops + 1)]


def nll_terms(estimates, targets: PropagatedStack,
              cfg: TrainConfig = TrainConfig()) -> np.ndarray:
    """Per-(depth, node) loss terms, shape (hops+1, n), float64.

    ``estimates`` holds one HopEstimate per stack layer. Rows for depths
    excluded by ``last_hop_only`` are zero.
    """
    layers = targets.layers
    hops_plus_1, n, d = layers.shape
    if len(estimates) != hops_plus_1:
        raise InputError(f"got {len(estimates)} estimates for "
                         f"{hops_plus_1} stack layers")
    coeff = _log_sigma_coeff(d, cfg)
    levels = range(hops_plus_1 - 1, hops_plus_1) if cfg.last_hop_only \
        else range(hops_plus_1)
    out = np.zeros((hops_plus_1, n), dtype=np.float64)
    for level in levels:
        est = estimates[level]
        if est.mu.shape != (n, d) or est.sigma.shape != (n,):
            raise InputError(f"estimate shape mismatch at hop {level}")
        r = np.asarray(est.mu, dtype=np.float64) - layers[level]
        s = np.einsum("ij,ij->i", r, r)
        sigma = np.asarray(est.sigma, dtype=np.float64)
        out[level] = s / (2.0 * sigma ** 2) + coeff * np.log(sigma)
    return out


def nll_loss(estimates, targets: PropagatedStack,
             cfg: TrainConfig = TrainConfig()) -> float:
    """Total Gaussian negative log-likelihood (up to additive constants)."""
    return float(nll_terms(estimates, targets, cfg).sum())


def backward(model: MqeModel, targets: PropagatedStack,
             cfg: TrainConfig = TrainConfig()):
    """Loss and closed-form gradients for every trainable array.

    Returns ``(loss, grads)`` where ``grads`` has the same keys as
    ``model.parameters()``. Arrays excluded by the ablation flags get
    zero gradients.
    """
    _check_targets(model, targets)
    arr = np.asarray(targets.layers, dtype=model.meta.dtype)
    return _backward(model, arr, cfg)


def _backward(model: MqeModel, target_layers: np.ndarray, cfg: TrainConfig):
    dtype = model.meta.dtype
    z = model.meta
    coeff = _log_sigma_coeff(model.feat_dim, cfg)
    grads = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    g_meta = grads["meta"]
    loss = 0.0
    for level in _hop_range(model, cfg):
        est = model.estimators[level]
        pre_mu, hid_mu, mu, pre_sg, hid_sg, t64, sigma = \
            _forward_hop(model, level)
        r64 = np.asarray(mu, dtype=np.float64) - target_layers[level]
        s = np.einsum("ij,ij->i", r64, r64)
        loss += float(np.sum(s / (2.0 * sigma ** 2) + coeff * np.log(sigma)))

        g_mu = (r64 / sigma[:, None] ** 2).astype(dtype)
        grads[f"hop{level}.mean.w2"] += hid_mu.T @ g_mu
        grads[f"hop{level}.mean.b2"] += g_mu.sum(axis=0)
        g_hid = g_mu @ est.mean_w2.T
        g_hid *= pre_mu > 0
        grads[f"hop{level}.mean.w1"] += z.T @ g_hid
        grads[f"hop{level}.mean.b1"] += g_hid.sum(axis=0)
        g_meta += g_hid @ est.mean_w1.T

        g_sigma = -s / sigma ** 3 + coeff / sigma
        g_t = (g_sigma * expit(t64)).astype(dtype)
        grads[f"hop{level}.sigma.w2"] += hid_sg.T @ g_t[:, None]
        grads[f"hop{level}.sigma.b2"] += g_t.sum(keepdims=True)
        g_hid = g_t[:, None] @ est.sigma_w2.T
        g_hid *= pre_sg > 0
        grads[f"hop{level}.sigma.w1"] += z.T @ g_hid
        grads[f"hop{level}.sigma.b1"] += g_hid.sum(axis=0)
        g_meta += g_hid @ est.sigma_w1.T
    return loss, grads


def train(model: MqeModel, targets: PropagatedStack,
          cfg: TrainConfig = TrainConfig()) -> list:
    """Fit the model in place with full-batch Adam; returns the loss trace.

    Trace entry e is the loss evaluated before the e-th update, so
    ``epochs=0`` leaves the model untouched and the trace empty.
    """
    _check_targets(model, targets)
    if cfg.epochs < 0:
        raise ConfigError("epochs must be >= 0")
    arr = np.asarray(targets.layers, dtype=model.meta.dtype)
    opt = Adam(model.parameters(), lr=cfg.learning_rate, beta1=cfg.beta1,
               beta2=cfg.beta2, eps=cfg.adam_eps)
    trace = []
    for epoch in range(cfg.epochs):
        loss, grads = _backward(model, arr, cfg)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite training loss at epoch {epoch}")
        trace.append(loss)
        opt.step(grads)
    return trace


def embeddings(model: MqeModel) -> np.ndarray:
    """The meta-representation matrix, used verbatim as node embeddings."""
    return model.meta


def write_embeddings(path, emb: np.ndarray) -> None:
    """Binary layout: uint64 n, uint64 dim (little endian), then float32
    values row-major."""
    emb = np.asarray(emb)
    if emb.ndim != 2:
        raise InputError("embeddings must be a 2-D array")
    with open(path, "wb") as fh:
        fh.write(_EMB_MAGIC.pack(emb.shape[0], emb.shape[1]))
        fh.write(np.ascontiguousarray(emb, dtype="<f4").tobytes())


def read_embeddings(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_EMB_MAGIC.size)
        if len(head) != _EMB_MAGIC.size:
            raise InputError(f"{path}: truncated embeddings header")
        n, dim = _EMB_MAGIC.unpack(head)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != n * dim:
        raise InputError(f"{path}: expected {n * dim} values, got {data.size}")
    return data.reshape(n, dim).astype(np.float32)


def save_model(path, model: MqeModel) -> None:
    arrays = dict(model.parameters())
    arrays["sigma_floor"] = np.float64(model.sigma_floor)
    arrays["hops"] = np.int64(model.hops)
    np.savez(path, **arrays)


def load_model(path) -> MqeModel:
    with np.load(path) as data:
        hops = int(data["hops"])
        floor = float(data["sigma_floor"])
        meta = data["meta"]
        estimators = []
        for level in range(hops + 1):
            estimators.append(HopEstimator(
                mean_w1=data[f"hop{level}.mean.w1"],
                mean_b1=data[f"hop{level}.mean.b1"],
                mean_w2=data[f"hop{level}.mean.w2"],
                mean_b2=data[f"hop{level}.mean.b2"],
                sigma_w1=data[f"hop{level}.sigma.w1"],
                sigma_b1=data[f"hop{level}.sigma.b1"],
                sigma_w2=data[f"hop{level}.sigma.w2"],
                sigma_b2=data[f"hop{level}.sigma.b2"],
            ))
    return MqeModel(meta=meta, estimators=estimators, sigma_floor=floor)


def write_loss_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, value in enumerate(trace):
            writer.writerow([epoch, f"{value:.12g}"])
