"""End-to-end experiment orchestration and the flat config format.

A run ingests or generates a dataset, optionally corrupts features,
builds the normalized propagation stack, overlays a cosine kNN graph,
re-propagates on the merged graph, trains the quality estimator, and
evaluates the learned embeddings with the linear probe. When noise ground
truth exists the run also reports sigma-vs-intensity correlations.

Configs are flat ``key=value`` text files. The manifest written next to
the outputs is itself such a config, carrying every resolved value that
affects results, so rerunning from the manifest alone reproduces the
outputs byte for byte at a fixed thread count.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import estimator
from .augmentation import build_augmented, cosine_knn
from .data import DatasetBundle, SbmSpec, gen_sbm, load_dataset
from .errors import ConfigError
from .evaluation import (NoiseReport, ProbeResult, correlation_report, probe)
from .graph import sym_normalize
from .noise import NoiseSpec, inject
from .propagation import propagate_stack, summed_features
from .rng import derive_seed

ABLATIONS = ("none", "no-aug", "no-mh", "no-reg")

_SBM_KEYS = ("sbm.n", "sbm.classes", "sbm.p_in", "sbm.p_out", "sbm.d",
             "sbm.class_sep", "sbm.within_std", "sbm.seed")
_NOISE_KEYS = ("noise.kind", "noise.alpha", "noise.beta", "noise.seed",
               "noise.uniform_low", "noise.uniform_high")
_SCALAR_KEYS = ("seed", "dataset", "knn_k", "hops", "dim_f", "dim_h", "lr",
                "epochs", "sigma_floor", "probe_runs", "ablation", "out")
CONFIG_KEYS = _SCALAR_KEYS + _SBM_KEYS + _NOISE_KEYS


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Optional[str] = None   # exactly one of dataset / sbm
    sbm: Optional[SbmSpec] = None
    noise: Optional[NoiseSpec] = None
    knn_k: int = 5
    hops: int = 8
    dim_f: int = 32
    dim_h: int = 64
    lr: float = 1e-2
    epochs: int = 1000
    sigma_floor: float = estimator.DEFAULT_SIGMA_FLOOR
    probe_runs: int = 5
    ablation: str = "none"
    seed: int = 0
    out: Optional[str] = None

    def __post_init__(self):
        if (self.dataset is None) == (self.sbm is None):
            raise ConfigError(
                "config needs exactly one of dataset=<dir> or sbm.* keys")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, "
                              f"got {self.ablation!r}")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.hops < 0:
            raise ConfigError("hops must be >= 0")
        if self.probe_runs < 1:
            raise ConfigError("probe_runs must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")


@dataclass(frozen=True)
class RunResult:
    model: estimator.MqeModel
    embedding_probe: ProbeResult
    raw_probe: ProbeResult
    noise_report: Optional[NoiseReport]
    loss_trace: list
    bundle: DatasetBundle
    manifest: dict


def parse_config_file(path) -> dict:
    """Read a flat key=value file into an ordered string mapping."""
    mapping = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(
                    f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, value = text.partition("=")
            key, value = key.strip(), value.strip()
            if key in mapping:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            mapping[key] = value
    return mapping


def _conv_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(
            f"config key {key}: expected an integer, got {value!r}") from None


def _conv_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(
            f"config key {key}: expected a number, got {value!r}") from None


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build a fully resolved config from string key=value pairs.

    Dataset-source seeds left unset are derived from the root seed, so the
    emitted manifest always pins them explicitly.
    """
    unknown = sorted(set(mapping) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")

    def geti(key, default):
        return _conv_int(key, mapping[key]) if key in mapping else default

    def getf(key, default):
        return _conv_float(key, mapping[key]) if key in mapping else default

    seed = geti("seed", 0)
    dataset = mapping.get("dataset") or None

    sbm = None
    if any(key in mapping for key in _SBM_KEYS):
        sbm = SbmSpec(
            n=geti("sbm.n", SbmSpec.n),
            classes=geti("sbm.classes", SbmSpec.classes),
            p_in=getf("sbm.p_in", SbmSpec.p_in),
            p_out=getf("sbm.p_out", SbmSpec.p_out),
            d=geti("sbm.d", SbmSpec.d),
            class_sep=getf("sbm.class_sep", SbmSpec.class_sep),
            within_std=getf("sbm.within_std", SbmSpec.within_std),
            seed=geti("sbm.seed", derive_seed(seed, "sbm")))

    noise = None
    noise_extras = [key for key in _NOISE_KEYS
                    if key != "noise.kind" and key in mapping]
    if "noise.kind" in mapping:
        noise = NoiseSpec(
            kind=mapping["noise.kind"],
            alpha=getf("noise.alpha", NoiseSpec.alpha),
            beta=getf("noise.beta", NoiseSpec.beta),
            seed=geti("noise.seed", derive_seed(seed, "noise")),
            uniform_low=getf("noise.uniform_low", NoiseSpec.uniform_low),
            uniform_high=getf("noise.uniform_high", NoiseSpec.uniform_high))
    elif noise_extras:
        raise ConfigError(
            f"config key {noise_extras[0]} requires noise.kind")

    return ExperimentConfig(
        dataset=dataset,
        sbm=sbm,
        noise=noise,
        knn_k=geti("knn_k", ExperimentConfig.knn_k),
        hops=geti("hops", ExperimentConfig.hops),
        dim_f=geti("dim_f", ExperimentConfig.dim_f),
        dim_h=geti("dim_h", ExperimentConfig.dim_h),
        lr=getf("lr", ExperimentConfig.lr),
        epochs=geti("epochs", ExperimentConfig.epochs),
        sigma_floor=getf("sigma_floor", ExperimentConfig.sigma_floor),
        probe_runs=geti("probe_runs", ExperimentConfig.probe_runs),
        ablation=mapping.get("ablation", ExperimentConfig.ablation),
        seed=seed,
        out=mapping.get("out") or None)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_mapping(cfg: ExperimentConfig) -> dict:
    """Resolved config as manifest pairs; omits out (not result-affecting)."""
    mapping = {"seed": _fmt(cfg.seed)}
    if cfg.dataset is not None:
        mapping["dataset"] = cfg.dataset
    else:
        s = cfg.sbm
        mapping.update({
            "sbm.n": _fmt(s.n), "sbm.classes": _fmt(s.classes),
            "sbm.p_in": _fmt(s.p_in), "sbm.p_out": _fmt(s.p_out),
            "sbm.d": _fmt(s.d), "sbm.class_sep": _fmt(s.class_sep),
            "sbm.within_std": _fmt(s.within_std), "sbm.seed": _fmt(s.seed),
        })
    if cfg.noise is not None:
        nz = cfg.noise
        mapping.update({
            "noise.kind": nz.kind, "noise.alpha": _fmt(nz.alpha),
            "noise.beta": _fmt(nz.beta), "noise.seed": _fmt(nz.seed),
            "noise.uniform_low": _fmt(nz.uniform_low),
            "noise.uniform_high": _fmt(nz.uniform_high),
        })
    mapping.update({
        "knn_k": _fmt(cfg.knn_k), "hops": _fmt(cfg.hops),
        "dim_f": _fmt(cfg.dim_f), "dim_h": _fmt(cfg.dim_h),
        "lr": _fmt(cfg.lr), "epochs": _fmt(cfg.epochs),
        "sigma_floor": _fmt(cfg.sigma_floor),
        "probe_runs": _fmt(cfg.probe_runs), "ablation": cfg.ablation,
    })
    return mapping


def write_config_file(path, mapping: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={value}\n")


def _g12(value: float) -> str:
    return f"{value:.12g}"


def _noise_lines(report: NoiseReport) -> list:
    value_p = "undefined" if report.pearson is None else _g12(report.pearson)
    value_s = "undefined" if report.spearman is None \
        else _g12(report.spearman)
    idx = np.flatnonzero(report.s_true > 0)
    lines = [f"noise_pearson: {value_p}",
             f"noise_spearman: {value_s}",
             f"perturbed_nodes: {idx.size}",
             "",
             "node,sigma0,s_true"]
    for node in idx:
        lines.append(f"{node},{_g12(report.sigma0[node])},"
                     f"{_g12(report.s_true[node])}")
    return lines


def render_noise_report(report: NoiseReport) -> str:
    return "\n".join(_noise_lines(report)) + "\n"


def render_report(result: RunResult) -> str:
    """Key: value lines plus a per-node CSV block for plotting."""
    lines = []
    for tag, pr in (("embedding_probe", result.embedding_probe),
                    ("raw_probe", result.raw_probe)):
        lines.append(f"{tag}_accuracy_mean: {_g12(pr.accuracy_mean)}")
        lines.append(f"{tag}_accuracy_std: {_g12(pr.accuracy_std)}")
        lines.append(f"{tag}_runs: {pr.runs}")
        lines.append(f"{tag}_l2: {_g12(pr.chosen_l2)}")
    lines.append(f"epochs_run: {len(result.loss_trace)}")
    if result.loss_trace:
        lines.append(f"final_loss: {_g12(result.loss_trace[-1])}")
    if result.noise_report is not None:
        lines.extend(_noise_lines(result.noise_report))
    return "\n".join(lines) + "\n"


def build_targets(cfg: ExperimentConfig, bundle: DatasetBundle):
    """Propagation targets for training: the augmented-graph stack, or the
    plain normalized stack under the no-aug ablation."""
    g_norm = sym_normalize(bundle.graph, add_self_loops=True)
    base_stack = propagate_stack(g_norm, bundle.features, cfg.hops)
    if cfg.ablation == "no-aug":
        return base_stack
    knn = cosine_knn(summed_features(base_stack), cfg.knn_k)
    merged = build_augmented(g_norm, knn)
    return propagate_stack(merged, bundle.features, cfg.hops)


def load_bundle(cfg: ExperimentConfig) -> DatasetBundle:
    """Ingest or generate the dataset, applying configured noise."""
    if cfg.dataset is not None:
        bundle = load_dataset(cfg.dataset)
    else:
        bundle = gen_sbm(cfg.sbm)
    if cfg.noise is not None:
        noisy, truth = inject(bundle.features, cfg.noise)
        clean = bundle.clean_features if bundle.clean_features is not None \
            else bundle.features
        bundle = replace(bundle, features=noisy, clean_features=clean,
                         ground_truth=truth)
    return bundle


def train_model(cfg: ExperimentConfig, bundle: DatasetBundle):
    """Build targets and fit the estimator; returns (model, loss trace)."""
    targets = build_targets(cfg, bundle)
    model = estimator.init_model(
        n=bundle.n, feat_dim=bundle.features.d, meta_dim=cfg.dim_f,
        hidden_dim=cfg.dim_h, hops=cfg.hops,
        seed=derive_seed(cfg.seed, "init"), sigma_floor=cfg.sigma_floor)
    train_cfg = estimator.TrainConfig(
        epochs=cfg.epochs, learning_rate=cfg.lr,
        last_hop_only=cfg.ablation == "no-mh",
        sigma_regularizer=cfg.ablation != "no-reg")
    trace = estimator.train(model, targets, train_cfg)
    return model, trace


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Execute the full pipeline; writes output files when cfg.out is set."""
    bundle = load_bundle(cfg)
    model, trace = train_model(cfg, bundle)

    probe_seed = derive_seed(cfg.seed, "probe")
    emb = estimator.embeddings(model)
    embedding_probe = probe(emb, bundle.labels, splits=bundle.splits,
                            runs=cfg.probe_runs, seed=probe_seed)
    raw_probe = probe(bundle.features.rows, bundle.labels,
                      splits=bundle.splits, runs=cfg.probe_runs,
                      seed=probe_seed)

    noise_report = None
    if bundle.ground_truth is not None:
        noise_report = correlation_report(model, bundle.ground_truth)

    result = RunResult(model=model, embedding_probe=embedding_probe,
                       raw_probe=raw_probe, noise_report=noise_report,
                       loss_trace=trace, bundle=bundle,
                       manifest=config_to_mapping(cfg))

    if cfg.out is not None:
        os.makedirs(cfg.out, exist_ok=True)
        write_config_file(os.path.join(cfg.out, "manifest.cfg"),
                          result.manifest)
        estimator.write_embeddings(os.path.join(cfg.out, "embeddings.bin"),
                                   emb)
        estimator.write_loss_trace(os.path.join(cfg.out, "loss_trace.csv"),
                                   trace)
        estimator.save_model(os.path.join(cfg.out, "model.npz"), model)
        with open(os.path.join(cfg.out, "report.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(render_report(result))
    return result
