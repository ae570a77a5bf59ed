"""Feature corruption, ground-truth intensity, and victim selection."""

import numpy as np
import pytest

from mqe.errors import ConfigError, InputError
from mqe.noise import (NoiseGroundTruth, NoiseSpec, inject, intensity,
                       victim_count)
from mqe.propagation import FeatureSet


def test_victim_count_rounds_half_up():
    assert victim_count(10, 0.5) == 5
    assert victim_count(10, 0.55) == 6
    assert victim_count(10, 0.04) == 0
    assert victim_count(10, 0.05) == 1
    assert victim_count(3, 1.0) == 3
    assert victim_count(601, 0.5) == 301


def test_inject_exact_victim_count():
    x = FeatureSet(np.zeros((10, 4)))
    _, truth = inject(x, NoiseSpec(kind="normal", alpha=0.5, beta=1.0,
                                   seed=0))
    assert int(truth.mask.sum()) == 5
    assert np.array_equal(truth.perturbed, np.flatnonzero(truth.mask))


def test_inject_beta_zero_is_identity():
    rng = np.random.default_rng(0)
    x = FeatureSet(rng.standard_normal((8, 3)))
    noisy, truth = inject(x, NoiseSpec(kind="normal", alpha=0.5, beta=0.0,
                                       seed=1))
    assert np.array_equal(noisy.rows, x.rows)
    assert np.all(truth.intensity == 0.0)
    assert int(truth.mask.sum()) == 4  # selection still happens


def test_inject_deterministic():
    rng = np.random.default_rng(1)
    x = FeatureSet(rng.standard_normal((12, 5)))
    spec = NoiseSpec(kind="uniform", alpha=0.25, beta=2.0, seed=7)
    a_rows, a_truth = inject(x, spec)
    b_rows, b_truth = inject(x, spec)
    assert np.array_equal(a_rows.rows, b_rows.rows)
    assert np.array_equal(a_truth.mask, b_truth.mask)
    assert np.array_equal(a_truth.intensity, b_truth.intensity)


def test_inject_per_node_streams_stable_across_alpha():
    # a node picked under two different alphas receives the same delta
    rng = np.random.default_rng(2)
    x = FeatureSet(rng.standard_normal((20, 6)))
    lo_rows, lo_truth = inject(x, NoiseSpec(alpha=0.2, beta=1.0, seed=3))
    hi_rows, hi_truth = inject(x, NoiseSpec(alpha=0.9, beta=1.0, seed=3))
    common = np.flatnonzero(lo_truth.mask & hi_truth.mask)
    assert common.size > 0
    assert np.array_equal(lo_rows.rows[common], hi_rows.rows[common])


def test_inject_untouched_rows_identical_and_zero_intensity():
    rng = np.random.default_rng(3)
    x = FeatureSet(rng.standard_normal((10, 4)))
    noisy, truth = inject(x, NoiseSpec(alpha=0.3, beta=1.5, seed=4))
    clean_idx = np.flatnonzero(~truth.mask)
    assert np.array_equal(noisy.rows[clean_idx], x.rows[clean_idx])
    assert np.all(truth.intensity[clean_idx] == 0.0)


def test_inject_positive_intensity_on_mask():
    rng = np.random.default_rng(4)
    x = FeatureSet(rng.standard_normal((30, 16)))
    for kind in ("normal", "uniform"):
        _, truth = inject(x, NoiseSpec(kind=kind, alpha=0.4, beta=0.1,
                                       seed=5))
        assert np.all(truth.intensity[truth.mask] > 0.0)
        assert np.all(truth.intensity[~truth.mask] == 0.0)


def test_inject_normal_mean_intensity_near_beta():
    # with unit Gaussian noise E[s_i] ~= beta; checked at n*d >= 1e5
    x = FeatureSet(np.zeros((500, 256)))
    beta = 0.7
    _, truth = inject(x, NoiseSpec(kind="normal", alpha=1.0, beta=beta,
                                   seed=6))
    assert abs(truth.intensity.mean() - beta) / beta < 0.05


def test_inject_uniform_noise_nonnegative_shift():
    x = FeatureSet(np.zeros((10, 8)))
    noisy, truth = inject(x, NoiseSpec(kind="uniform", alpha=1.0, beta=1.0,
                                       seed=7))
    assert np.all(noisy.rows >= 0.0)
    assert np.all(noisy.rows < 1.0)


def test_inject_uniform_range_override():
    x = FeatureSet(np.zeros((10, 8)))
    noisy, _ = inject(x, NoiseSpec(kind="uniform", alpha=1.0, beta=1.0,
                                   seed=8, uniform_low=-1.0,
                                   uniform_high=1.0))
    assert noisy.rows.min() < 0.0


def test_inject_clean_copy_retained():
    rng = np.random.default_rng(5)
    x = FeatureSet(rng.standard_normal((6, 3)))
    noisy, truth = inject(x, NoiseSpec(alpha=1.0, beta=1.0, seed=9))
    assert np.array_equal(truth.clean.rows, x.rows)
    assert not np.array_equal(noisy.rows, x.rows)


def test_intensity_hand_oracle():
    clean = FeatureSet(np.array([[1.0, 1.0, 1.0, 1.0]]))
    noisy = FeatureSet(np.array([[2.0, 1.0, 1.0, 1.0]]))
    assert intensity(clean, noisy)[0] == pytest.approx(0.5, abs=1e-15)
    assert intensity(clean, clean)[0] == 0.0


def test_intensity_matches_naive_loop():
    rng = np.random.default_rng(6)
    a = FeatureSet(rng.standard_normal((7, 5)))
    b = FeatureSet(rng.standard_normal((7, 5)))
    got = intensity(a, b)
    for i in range(7):
        total = 0.0
        for j in range(5):
            total += (b.rows[i, j] - a.rows[i, j]) ** 2
        assert got[i] == pytest.approx(np.sqrt(total / 5), abs=1e-12)


def test_intensity_shape_mismatch():
    with pytest.raises(InputError, match="shapes differ"):
        intensity(FeatureSet(np.zeros((2, 3))), FeatureSet(np.zeros((2, 4))))


def test_spec_validation():
    with pytest.raises(ConfigError, match="kind"):
        NoiseSpec(kind="laplace")
    with pytest.raises(ConfigError, match="alpha"):
        NoiseSpec(alpha=0.0)
    with pytest.raises(ConfigError, match="alpha"):
        NoiseSpec(alpha=1.5)
    with pytest.raises(ConfigError, match="beta"):
        NoiseSpec(beta=-0.1)
    with pytest.raises(ConfigError, match="uniform_high"):
        NoiseSpec(uniform_low=1.0, uniform_high=0.5)


def test_ground_truth_perturbed_property():
    truth = NoiseGroundTruth(mask=np.array([True, False, True]),
                             intensity=np.array([0.5, 0.0, 1.0]))
    assert np.array_equal(truth.perturbed, [0, 2])
