"""Drift index, competitive ratio, and paired significance tests."""

import numpy as np
import pytest
import scipy.stats

from coarsematch.errors import UndefinedMetricError, ValidationError
from coarsematch.metrics import (
    competitive_ratio,
    psi,
    psi_prebinned,
    summarize_ratios,
    wilcoxon_signed_rank,
)

from oracles import psi_direct, wilcoxon_enumerated


# --- population stability index ----------------------------------------------


def test_psi_identical_samples_is_tiny():
    rng = np.random.default_rng(0)
    sample = rng.normal(size=4000)
    res = psi(sample, sample)
    assert res.value <= 1e-9
    assert res.classification == "stable"


def test_psi_prebinned_worked_example():
    res = psi_prebinned([0.5, 0.5], [0.25, 0.75])
    assert res.value == pytest.approx(0.27465307216702745, abs=1e-5)
    assert res.classification == "major"
    assert res.bin_edges is None


def test_psi_prebinned_matches_direct_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        k = int(rng.integers(2, 12))
        p = rng.dirichlet(np.ones(k))
        q = rng.dirichlet(np.ones(k))
        res = psi_prebinned(p, q)
        assert res.value == pytest.approx(psi_direct(p, q), abs=1e-12)


def test_psi_nonnegative_fuzz():
    rng = np.random.default_rng(7)
    for _ in range(30):
        a = rng.normal(loc=rng.uniform(-2, 2), scale=rng.uniform(0.5, 2), size=500)
        e = rng.normal(loc=rng.uniform(-2, 2), scale=rng.uniform(0.5, 2), size=700)
        assert psi(a, e).value >= -1e-12


def test_psi_symmetric_in_arguments():
    # (p - q) log(p/q) is symmetric under swapping p and q
    rng = np.random.default_rng(11)
    a = rng.normal(size=800)
    e = rng.normal(loc=0.7, size=900)
    assert psi(a, e).value == pytest.approx(psi(e, a).value, rel=0.2)
    p = rng.dirichlet(np.ones(6))
    q = rng.dirichlet(np.ones(6))
    assert psi_prebinned(p, q).value == pytest.approx(psi_prebinned(q, p).value, abs=1e-12)


def test_psi_every_observation_lands_in_a_bin():
    rng = np.random.default_rng(5)
    expected = rng.normal(size=1000)
    actual = rng.normal(loc=8.0, size=400)  # far outside the expected range
    res = psi(actual, expected)
    assert res.actual_freq.sum() == pytest.approx(1.0, abs=1e-12)
    assert res.expected_freq.sum() == pytest.approx(1.0, abs=1e-12)
    assert res.actual_freq.size == 10
    # the shifted sample piles into the top unbounded bin
    assert res.actual_freq[-1] == pytest.approx(1.0, abs=1e-12)
    assert res.classification == "major"


def test_psi_thresholds():
    assert psi_prebinned([0.52, 0.48], [0.5, 0.5]).classification == "stable"
    # moderate shift lands in the minor band: psi ~ 0.17
    res = psi_prebinned([0.7, 0.3], [0.5, 0.5])
    assert 0.1 <= res.value < 0.25
    assert res.classification == "minor"


def test_psi_input_validation():
    with pytest.raises(UndefinedMetricError):
        psi([], [1.0, 2.0])
    with pytest.raises(ValidationError):
        psi([1.0], [1.0], n_bins=1)
    with pytest.raises(ValidationError):
        psi_prebinned([0.5, 0.5], [0.5])
    with pytest.raises(ValidationError):
        psi_prebinned([0.7, 0.4], [0.5, 0.5])
    with pytest.raises(ValidationError):
        psi_prebinned([-0.1, 1.1], [0.5, 0.5])


# --- competitive ratio ---------------------------------------------------------


def test_competitive_ratio():
    assert competitive_ratio(3.0, 4.0) == pytest.approx(0.75)
    with pytest.raises(UndefinedMetricError):
        competitive_ratio(1.0, 0.0)


# --- signed-rank test -----------------------------------------------------------


def test_wilcoxon_all_positive_pin():
    # n = 10 strictly positive differences: p = 2 * (1/2^10) = 0.001953125
    x = np.arange(1.0, 11.0)
    y = np.zeros(10)
    assert wilcoxon_signed_rank(x, y) == pytest.approx(2.0 / 1024.0, abs=1e-15)


def test_wilcoxon_all_zero_differences():
    assert wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0]) == 1.0


@pytest.mark.parametrize("seed", range(12))
def test_wilcoxon_matches_enumeration_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 13))
    x = rng.normal(size=n)
    y = x + rng.normal(scale=0.8, size=n)
    # inject ties in |d| occasionally
    if seed % 3 == 0 and n >= 4:
        y[1] = x[1] - (x[0] - y[0])
    assert wilcoxon_signed_rank(x, y) == pytest.approx(wilcoxon_enumerated(x, y), abs=1e-12)


def test_wilcoxon_matches_scipy_exact_mode():
    rng = np.random.default_rng(42)
    for n in (8, 14, 20):
        x = rng.normal(size=n)
        y = x + rng.normal(scale=0.5, size=n)
        d = x - y
        if np.any(d == 0) or len(np.unique(np.abs(d))) < n:
            continue  # scipy's exact mode requires no zeros and no ties
        ref = scipy.stats.wilcoxon(x, y, alternative="two-sided", mode="exact").pvalue
        assert wilcoxon_signed_rank(x, y) == pytest.approx(ref, abs=1e-12)


def test_wilcoxon_normal_approx_for_large_n():
    rng = np.random.default_rng(1)
    x = rng.normal(size=60)
    y = x + rng.normal(scale=1.0, size=60) + 0.5
    ours = wilcoxon_signed_rank(x, y)
    ref = scipy.stats.wilcoxon(x, y, alternative="two-sided", mode="approx").pvalue
    assert ours == pytest.approx(ref, abs=5e-3)
    # a strong one-directional shift must be highly significant
    z = x + 2.0
    assert wilcoxon_signed_rank(z, x) < 1e-6


def test_wilcoxon_rejects_mismatched_lengths():
    with pytest.raises(ValidationError):
        wilcoxon_signed_rank([1.0, 2.0], [1.0])


# --- run summaries ---------------------------------------------------------------


def test_summarize_ratios_basic():
    s = summarize_ratios("csm-discard-uniform_random", 16, "constrained_kmeans", [0.8, 0.9, 1.0])
    assert s.n_runs == 3
    assert s.mean_ratio == pytest.approx(0.9)
    assert s.std_ratio == pytest.approx(np.std([0.8, 0.9, 1.0], ddof=1))
    assert s.p_value_vs_baseline is None


def test_summarize_ratios_paired_p_value():
    base = [0.5, 0.55, 0.6, 0.52, 0.58, 0.51, 0.57, 0.54, 0.56, 0.53]
    better = [b + 0.1 for b in base]
    s = summarize_ratios("csm", 25, "constrained_kmeans", better, base, "sm_b")
    assert s.baseline == "sm_b"
    assert s.p_value_vs_baseline == pytest.approx(2.0 / 1024.0, abs=1e-12)
    with pytest.raises(UndefinedMetricError):
        summarize_ratios("csm", 25, "m", [])
