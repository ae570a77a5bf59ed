"""Command-line entry point.

Subcommands compose via the dataset directory convention:

  run           full pipeline from a config file and/or flag overrides
  gen-sbm       write a synthetic planted-partition dataset directory
  inject-noise  corrupt a dataset's features, recording ground truth
  train         fit the estimator on a dataset directory
  probe         linear-probe stored embeddings or raw features
  estimate      correlate a trained model's hop-0 sigma with ground truth
  hop-sweep     probe every propagation depth of the normalized graph

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .data import SbmSpec, gen_sbm, load_dataset, save_dataset
from .errors import ConfigError, EvalError, InputError, NumericalError
from .estimator import (load_model, read_embeddings, save_model,
                        write_embeddings, write_loss_trace)
from .evaluation import (correlation_report, hop_sweep, hop_sweep_csv_lines,
                         probe)
from .graph import sym_normalize
from .noise import NoiseSpec, inject
from .pipeline import (config_from_mapping, config_to_mapping, load_bundle,
                       parse_config_file, render_noise_report, render_report,
                       run_experiment, train_model, write_config_file)

# run/train flags that mirror config keys one-to-one
_KEY_FLAGS = (
    ("dataset", "--dataset", "dataset directory"),
    ("seed", "--seed", "root seed for all derived randomness"),
    ("hops", "--hops", "propagation depth L"),
    ("dim_f", "--dim-f", "meta-representation width"),
    ("dim_h", "--dim-h", "estimator hidden width"),
    ("lr", "--lr", "Adam learning rate"),
    ("epochs", "--epochs", "training epochs"),
    ("sigma_floor", "--sigma-floor", "lower bound added to sigma"),
    ("probe_runs", "--probe-runs", "linear-probe repetitions"),
    ("ablation", "--ablation", "one of none, no-aug, no-mh, no-reg"),
    ("knn_k", "--knn-k", "neighbors per node in the feature kNN graph"),
)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--threads", type=int, default=None,
                     help="cap numeric library threads (default: unlimited)")


def _add_key_flags(sub: argparse.ArgumentParser, skip=()) -> None:
    for key, flag, help_text in _KEY_FLAGS:
        if key not in skip:
            sub.add_argument(flag, dest=f"key_{key}", metavar="V",
                             default=None, help=help_text)


def _collect_mapping(args, base=None) -> dict:
    """Merge config file, --set pairs, and named flags (in that order)."""
    mapping = dict(base or {})
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        mapping[key.strip()] = value.strip()
    for key, _flag, _help in _KEY_FLAGS:
        value = getattr(args, f"key_{key}", None)
        if value is not None:
            mapping[key] = value
    if getattr(args, "no_augment", False):
        mapping["ablation"] = "no-aug"
    if getattr(args, "out", None):
        mapping["out"] = args.out
    return mapping


def cmd_run(args) -> int:
    base = parse_config_file(args.config) if args.config else {}
    cfg = config_from_mapping(_collect_mapping(args, base))
    result = run_experiment(cfg)
    sys.stdout.write(render_report(result))
    return 0


def cmd_gen_sbm(args) -> int:
    spec = SbmSpec(n=args.n, classes=args.classes, p_in=args.p_in,
                   p_out=args.p_out, d=args.d, class_sep=args.class_sep,
                   within_std=args.within_std, seed=args.seed)
    bundle = gen_sbm(spec)
    save_dataset(args.out, bundle)
    print(f"wrote {bundle.n} nodes, {bundle.graph.edge_count} edges, "
          f"{bundle.n_classes} classes to {args.out}")
    return 0


def cmd_inject_noise(args) -> int:
    bundle = load_dataset(args.in_dir)
    spec = NoiseSpec(kind=args.kind, alpha=args.alpha, beta=args.beta,
                     seed=args.seed, uniform_low=args.uniform_low,
                     uniform_high=args.uniform_high)
    noisy, truth = inject(bundle.features, spec)
    clean = bundle.clean_features if bundle.clean_features is not None \
        else bundle.features
    save_dataset(args.out, replace(bundle, features=noisy,
                                   clean_features=clean, ground_truth=truth))
    print(f"corrupted {int(truth.mask.sum())} of {bundle.n} nodes "
          f"(kind={spec.kind}, beta={spec.beta:g})")
    return 0


def cmd_train(args) -> int:
    mapping = _collect_mapping(args)
    mapping["dataset"] = args.data
    mapping.pop("out", None)
    cfg = config_from_mapping(mapping)
    bundle = load_bundle(cfg)
    model, trace = train_model(cfg, bundle)
    os.makedirs(args.out, exist_ok=True)
    write_config_file(os.path.join(args.out, "manifest.cfg"),
                      config_to_mapping(cfg))
    write_embeddings(os.path.join(args.out, "embeddings.bin"), model.meta)
    write_loss_trace(os.path.join(args.out, "loss_trace.csv"), trace)
    save_model(os.path.join(args.out, "model.npz"), model)
    if trace:
        print(f"trained {len(trace)} epochs; final loss {trace[-1]:.12g}")
    else:
        print("trained 0 epochs")
    return 0


def cmd_probe(args) -> int:
    bundle = load_dataset(args.data)
    if args.embeddings:
        x = read_embeddings(args.embeddings)
    else:
        x = bundle.features.rows
    res = probe(x, bundle.labels, splits=bundle.splits, runs=args.runs,
                seed=args.seed)
    print(f"accuracy_mean: {res.accuracy_mean:.12g}")
    print(f"accuracy_std: {res.accuracy_std:.12g}")
    print(f"runs: {res.runs}")
    print(f"chosen_l2: {res.chosen_l2:.12g}")
    return 0


def cmd_estimate(args) -> int:
    bundle = load_dataset(args.data)
    if bundle.ground_truth is None:
        raise InputError(f"{args.data}: no noise ground truth "
                         "(noise_mask.txt and intensity.txt required)")
    model = load_model(args.model)
    text = render_noise_report(correlation_report(model,
                                                  bundle.ground_truth))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_hop_sweep(args) -> int:
    bundle = load_dataset(args.data)
    g_norm = sym_normalize(bundle.graph)
    results = hop_sweep(g_norm, bundle.features, bundle.labels,
                        bundle.splits, args.hops, runs=args.runs,
                        seed=args.seed)
    lines = hop_sweep_csv_lines(results)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mqe",
        description="Noise-resilient graph embeddings via multi-hop "
                    "feature quality estimation.")
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="full pipeline")
    run.add_argument("--config", default=None,
                     help="flat key=value config file")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override any config key (repeatable)")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--no-augment", action="store_true",
                     help="shorthand for --ablation no-aug")
    _add_key_flags(run)
    _add_common(run)
    run.set_defaults(func=cmd_run)

    gen = subs.add_parser("gen-sbm", help="generate a synthetic dataset")
    gen.add_argument("--out", required=True, help="dataset directory")
    gen.add_argument("--n", type=int, default=SbmSpec.n)
    gen.add_argument("--classes", type=int, default=SbmSpec.classes)
    gen.add_argument("--p-in", type=float, default=SbmSpec.p_in)
    gen.add_argument("--p-out", type=float, default=SbmSpec.p_out)
    gen.add_argument("--d", type=int, default=SbmSpec.d)
    gen.add_argument("--class-sep", type=float, default=SbmSpec.class_sep)
    gen.add_argument("--within-std", type=float, default=SbmSpec.within_std)
    gen.add_argument("--seed", type=int, default=0)
    _add_common(gen)
    gen.set_defaults(func=cmd_gen_sbm)

    noise = subs.add_parser("inject-noise", help="corrupt dataset features")
    noise.add_argument("--in", dest="in_dir", required=True,
                       help="input dataset dir")
    noise.add_argument("--out", required=True, help="output dataset dir")
    noise.add_argument("--kind", choices=("normal", "uniform"),
                       default="normal")
    noise.add_argument("--alpha", type=float, default=NoiseSpec.alpha)
    noise.add_argument("--beta", type=float, default=NoiseSpec.beta)
    noise.add_argument("--uniform-low", type=float,
                       default=NoiseSpec.uniform_low)
    noise.add_argument("--uniform-high", type=float,
                       default=NoiseSpec.uniform_high)
    noise.add_argument("--seed", type=int, default=0)
    _add_common(noise)
    noise.set_defaults(func=cmd_inject_noise)

    train = subs.add_parser("train", help="fit the estimator")
    train.add_argument("--data", required=True, help="dataset directory")
    train.add_argument("--out", required=True, help="artifact directory")
    train.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
    train.add_argument("--no-augment", action="store_true",
                       help="shorthand for --ablation no-aug")
    _add_key_flags(train, skip=("dataset", "probe_runs"))
    _add_common(train)
    train.set_defaults(func=cmd_train)

    prb = subs.add_parser("probe", help="linear-probe classification")
    prb.add_argument("--data", required=True, help="dataset directory")
    prb.add_argument("--embeddings", default=None,
                     help="embeddings file (default: raw features)")
    prb.add_argument("--runs", type=int, default=5)
    prb.add_argument("--seed", type=int, default=0)
    _add_common(prb)
    prb.set_defaults(func=cmd_probe)

    est = subs.add_parser("estimate",
                          help="noise-intensity correlation report")
    est.add_argument("--data", required=True,
                     help="dataset directory with noise ground truth")
    est.add_argument("--model", required=True, help="trained model .npz")
    est.add_argument("--out", default=None,
                     help="report path (default: stdout)")
    _add_common(est)
    est.set_defaults(func=cmd_estimate)

    sweep = subs.add_parser("hop-sweep",
                            help="probe accuracy at each depth")
    sweep.add_argument("--data", required=True, help="dataset directory")
    sweep.add_argument("--hops", type=int, default=8)
    sweep.add_argument("--runs", type=int, default=5)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--out", default=None,
                       help="CSV path (default: stdout)")
    _add_common(sweep)
    sweep.set_defaults(func=cmd_hop_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except EvalError as exc:
        print(f"eval error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
