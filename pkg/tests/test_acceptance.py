"""Release gate: one test per acceptance criterion.

Each test prints a single ``criterion N: PASS/FAIL`` line with the measured
numbers (bypassing capture so the line always reaches the console), then
asserts. The noisy-benchmark criteria share one module-scoped fixture that
executes the full 3-ablation x 5-seed sweep single-threaded.
"""

import os
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from threadpoolctl import threadpool_limits

from mqe.cli import main as cli_main
from mqe.data import SbmSpec
from mqe.estimator import (TrainConfig, backward, forward, hop_estimates,
                           init_model, nll_loss, train)
from mqe.graph import from_edge_list, sym_normalize
from mqe.noise import NoiseSpec
from mqe.pipeline import ExperimentConfig, run_experiment
from mqe.propagation import FeatureSet, PropagatedStack, propagate_stack
from mqe.rng import derive_seed

SEEDS = range(5)


def _report(capsys, num: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(f"criterion {num}: {status} - {detail}", flush=True)


def test_criterion_1_propagation_matches_dense_matrix_powers(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, 5))
        hops = int(rng.integers(0, 6))
        upper = np.triu(rng.random((n, n)) < 0.4, 1)
        g = from_edge_list(n, list(zip(*map(list, np.nonzero(upper)))))
        g_norm = sym_normalize(g, add_self_loops=True)
        a = g_norm.to_scipy().toarray()
        x = rng.standard_normal((n, d))
        stack = propagate_stack(g_norm, FeatureSet(x), hops)
        for level in range(hops + 1):
            ref = np.linalg.matrix_power(a, level) @ x
            dev = float(np.max(np.abs(stack.layer(level) - ref)))
            worst = max(worst, dev)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 5.0
    _report(capsys, 1, ok, f"max |sparse stack - dense power| {worst:.3g} "
                   f"over 50 graphs in {dt:.2f}s (bounds 1e-10, 5s)")
    assert ok


def test_criterion_2_gradients_match_central_differences(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(22)
    combos = (TrainConfig(), TrainConfig(last_hop_only=True),
              TrainConfig(sigma_regularizer=False),
              TrainConfig(log_sigma_per_dim=False))
    step, rel_tol = 1e-5, 1e-6
    total = bad = floored = 0
    worst_rel = 0.0
    for i in range(20):
        n = int(rng.integers(2, 6))
        d = int(rng.integers(1, 5))
        f = int(rng.integers(1, 4))
        h = int(rng.integers(1, 5))
        hops = int(rng.integers(0, 4))
        cfg = combos[i % len(combos)]
        model = init_model(n, d, f, h, hops,
                           seed=int(rng.integers(1 << 31)),
                           dtype=np.float64)
        for p in model.parameters().values():
            p += 0.05 * rng.standard_normal(p.shape)
        stack = PropagatedStack(rng.standard_normal((hops + 1, n, d)))
        loss, grads = backward(model, stack, cfg)
        # central differences bottom out near eps*|loss|/step; deviations
        # under this floor are indistinguishable from FD roundoff
        guard = 1e-9 * max(1.0, abs(loss))
        for key, p in model.parameters().items():
            flat_p, flat_g = p.ravel(), grads[key].ravel()
            for idx in range(flat_p.size):
                orig = flat_p[idx]
                flat_p[idx] = orig + step
                up = nll_loss(hop_estimates(model), stack, cfg)
                flat_p[idx] = orig - step
                down = nll_loss(hop_estimates(model), stack, cfg)
                flat_p[idx] = orig
                fd = (up - down) / (2 * step)
                err = abs(flat_g[idx] - fd)
                total += 1
                scale = max(abs(fd), abs(flat_g[idx]))
                rel = err / scale if scale > 0 else 0.0
                if rel > rel_tol and err <= guard:
                    floored += 1
                    continue
                worst_rel = max(worst_rel, rel)
                bad += rel > rel_tol
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 30.0
    _report(capsys, 2, ok, f"{total} coordinates over 20 instances: {bad} beyond "
                   f"rel {rel_tol:g}, worst rel {worst_rel:.2g}, {floored} "
                   f"under the roundoff floor, {dt:.1f}s (bound 30s)")
    assert ok


def test_criterion_3_sigma_optimum_is_rms_residual(capsys):
    rng = np.random.default_rng(33)
    worst_gap = 0.0
    for _ in range(100):
        s = float(rng.uniform(0.01, 50.0))
        d = int(rng.integers(1, 65))
        res = minimize_scalar(
            lambda sig: s / (2.0 * sig * sig) + d * np.log(sig),
            bounds=(1e-3, 50.0), method="bounded",
            options={"xatol": 1e-10})
        worst_gap = max(worst_gap, abs(float(res.x) - np.sqrt(s / d)))

    # capacity-starved mean head: after staged-lr training to a stationary
    # point the sigma head must report the RMS of the leftover residuals
    rng = np.random.default_rng(100)
    model = init_model(10, 12, 2, 32, 1, seed=0, dtype=np.float64)
    stack = PropagatedStack(rng.standard_normal((2, 10, 12)))
    for epochs, lr in ((6000, 1e-2), (4000, 1e-3), (4000, 1e-4),
                       (2000, 1e-5)):
        train(model, stack, TrainConfig(epochs=epochs, learning_rate=lr))
    checked = 0
    worst_rel = 0.0
    for level in range(2):
        out = forward(model, level)
        resid = np.sqrt(np.mean((out.mu - stack.layer(level)) ** 2, axis=1))
        for node in np.flatnonzero(resid > 10 * model.sigma_floor):
            checked += 1
            worst_rel = max(worst_rel,
                            abs(out.sigma[node] - resid[node]) / resid[node])
    ok = worst_gap <= 1e-6 and checked > 0 and worst_rel <= 0.10
    _report(capsys, 3, ok, f"numeric argmin within {worst_gap:.2g} of sqrt(S/d) on "
                   f"100 pairs; trained sigma within {worst_rel:.1%} of RMS "
                   f"residual on {checked} nodes (bounds 1e-6, 10%)")
    assert ok


@pytest.fixture(scope="module")
def benchmark_runs():
    """3 ablations x 5 seeds on the standard noisy benchmark, timed."""
    results, secs = {}, {}
    with threadpool_limits(limits=1):
        for seed in SEEDS:
            for ablation in ("none", "no-mh", "no-reg"):
                cfg = ExperimentConfig(
                    sbm=SbmSpec(n=600, classes=3, p_in=0.05, p_out=0.005,
                                d=64, class_sep=1.0, within_std=0.5,
                                seed=derive_seed(seed, "sbm")),
                    noise=NoiseSpec(kind="normal", alpha=0.5, beta=1.0,
                                    seed=derive_seed(seed, "noise")),
                    ablation=ablation, seed=seed)
                t0 = time.perf_counter()
                results[(ablation, seed)] = run_experiment(cfg)
                secs[(ablation, seed)] = time.perf_counter() - t0
    return results, secs


def test_criterion_4_embeddings_beat_raw_features_under_noise(
        benchmark_runs, capsys):
    results, secs = benchmark_runs
    gains, ordered = [], []
    for seed in SEEDS:
        full = results[("none", seed)]
        nomh = results[("no-mh", seed)]
        gains.append(full.embedding_probe.accuracy_mean
                     - full.raw_probe.accuracy_mean)
        ordered.append(full.embedding_probe.accuracy_mean
                       >= nomh.embedding_probe.accuracy_mean)
    a_votes = sum(g >= 0.05 for g in gains)
    b_votes = sum(ordered)
    slowest = max(secs.values())
    ok = a_votes >= 3 and b_votes >= 3 and slowest < 120.0
    gain_text = ", ".join(f"{g:+.3f}" for g in gains)
    _report(capsys, 4, ok, f"embedding-raw gain >= +0.05 on {a_votes}/5 seeds "
                   f"({gain_text}); multi-hop >= last-hop-only on "
                   f"{b_votes}/5; slowest run {slowest:.0f}s (bound 120s)")
    assert ok


def test_criterion_5_sigma_ranks_corrupted_nodes(benchmark_runs, capsys):
    results, _ = benchmark_runs
    rhos = [results[("none", seed)].noise_report.spearman for seed in SEEDS]
    votes = sum(r is not None and r >= 0.6 for r in rhos)
    ok = votes >= 3
    rho_text = ", ".join("undef" if r is None else f"{r:.3f}" for r in rhos)
    _report(capsys, 5, ok, f"spearman(sigma0, intensity) >= 0.6 on {votes}/5 seeds "
                   f"({rho_text})")
    assert ok


def test_criterion_6_citation_graph_benchmark(capsys):
    data_dir = os.environ.get("MQE_CORA_DIR")
    if not data_dir:
        with capsys.disabled():
            print("criterion 6: SKIP - optional citation benchmark, set "
                  "MQE_CORA_DIR to run", flush=True)
        pytest.skip("MQE_CORA_DIR not set")
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        clean = run_experiment(ExperimentConfig(dataset=data_dir, seed=0))
        noisy = run_experiment(ExperimentConfig(
            dataset=data_dir, seed=0,
            noise=NoiseSpec(kind="normal", alpha=0.5, beta=0.8,
                            seed=derive_seed(0, "noise"))))
    dt = time.perf_counter() - t0
    acc_clean = clean.embedding_probe.accuracy_mean
    acc_noisy = noisy.embedding_probe.accuracy_mean
    ok = 0.84 <= acc_clean <= 0.88 and acc_noisy >= 0.79 and dt < 600.0
    _report(capsys, 6, ok, f"clean {acc_clean:.3f} (band [0.84, 0.88]), noisy "
                   f"{acc_noisy:.3f} (floor 0.79), {dt:.0f}s (bound 600s)")
    assert ok


def test_criterion_7_manifest_rerun_is_byte_identical(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    first = ["run", "--set", "sbm.n=200", "--set", "sbm.classes=3",
             "--set", "sbm.d=16", "--set", "noise.kind=normal",
             "--set", "noise.alpha=0.5", "--hops", "4", "--epochs", "150",
             "--dim-f", "8", "--dim-h", "16", "--probe-runs", "3",
             "--seed", "1", "--threads", "1", "--out", str(out1)]
    assert cli_main(first) == 0
    second = ["run", "--config", str(out1 / "manifest.cfg"),
              "--threads", "1", "--out", str(out2)]
    assert cli_main(second) == 0
    same = {name: (out1 / name).read_bytes() == (out2 / name).read_bytes()
            for name in ("embeddings.bin", "report.txt", "manifest.cfg",
                         "loss_trace.csv")}
    ok = all(same.values())
    diff = [name for name, equal in same.items() if not equal]
    _report(capsys, 7, ok, "manifest rerun reproduced embeddings.bin, report.txt, "
                   "manifest.cfg, loss_trace.csv byte for byte" if ok else
                   f"files differ on rerun: {', '.join(diff)}")
    assert ok


def test_criterion_8_dropping_sigma_penalty_hurts_accuracy(
        benchmark_runs, capsys):
    results, _ = benchmark_runs
    pairs = [(results[("none", seed)].embedding_probe.accuracy_mean,
              results[("no-reg", seed)].embedding_probe.accuracy_mean)
             for seed in SEEDS]
    votes = sum(noreg < full for full, noreg in pairs)
    ok = votes >= 3
    pair_text = ", ".join(f"{full:.3f}>{noreg:.3f}" if noreg < full else
                          f"{full:.3f}<={noreg:.3f}" for full, noreg in pairs)
    _report(capsys, 8, ok, f"no-reg strictly below full on {votes}/5 seeds "
                   f"({pair_text})")
    assert ok
