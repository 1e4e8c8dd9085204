"""Evaluation metrics: competitive ratios, drift (PSI), paired significance.

psi follows the standard population-stability recipe: decile bins from the
reference sample's quantiles with unbounded outer bins, additive smoothing of
1e-6 on both frequency vectors, and classification thresholds at 0.1 and 0.25.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError, ValidationError

PSI_SMOOTHING = 1e-6
PSI_STABLE = 0.1
PSI_MAJOR = 0.25
WILCOXON_EXACT_MAX_N = 25


@dataclass
class PsiResult:
    value: float
    classification: str  # stable | minor | major
    actual_freq: np.ndarray
    expected_freq: np.ndarray
    bin_edges: np.ndarray | None  # None for pre-binned inputs


def _classify(value: float) -> str:
    if value < PSI_STABLE:
        return "stable"
    if value < PSI_MAJOR:
        return "minor"
    return "major"


def _psi_from_freqs(actual_freq, expected_freq, edges) -> PsiResult:
    pa = actual_freq + PSI_SMOOTHING
    qa = expected_freq + PSI_SMOOTHING
    value = float(np.sum((pa - qa) * np.log(pa / qa)))
    return PsiResult(
        value=value,
        classification=_classify(value),
        actual_freq=actual_freq,
        expected_freq=expected_freq,
        bin_edges=edges,
    )


def psi(actual, expected, n_bins: int = 10) -> PsiResult:
    """Population stability index of `actual` against the `expected` baseline.

    Bins are quantiles of the expected sample; both tails are unbounded, so
    every observation lands in a bin. Values equal to an edge go to the upper
    bin.
    """
    actual = np.asarray(actual, dtype=np.float64).ravel()
    expected = np.asarray(expected, dtype=np.float64).ravel()
    if actual.size == 0 or expected.size == 0:
        raise UndefinedMetricError("psi needs nonempty samples")
    if n_bins < 2:
        raise ValidationError(f"n_bins={n_bins} must be at least 2")
    edges = np.quantile(expected, np.arange(1, n_bins) / n_bins)
    a_idx = np.searchsorted(edges, actual, side="right")
    e_idx = np.searchsorted(edges, expected, side="right")
    actual_freq = np.bincount(a_idx, minlength=n_bins) / actual.size
    expected_freq = np.bincount(e_idx, minlength=n_bins) / expected.size
    return _psi_from_freqs(actual_freq, expected_freq, edges)


def psi_prebinned(actual_freq, expected_freq) -> PsiResult:
    """PSI from already-binned frequency vectors (each summing to one)."""
    actual_freq = np.asarray(actual_freq, dtype=np.float64)
    expected_freq = np.asarray(expected_freq, dtype=np.float64)
    if actual_freq.shape != expected_freq.shape or actual_freq.ndim != 1:
        raise ValidationError("frequency vectors must be 1-d and equally long")
    if actual_freq.size == 0:
        raise UndefinedMetricError("psi needs at least one bin")
    for name, f in (("actual", actual_freq), ("expected", expected_freq)):
        if np.any(f < 0):
            raise ValidationError(f"{name} frequencies contain negatives")
        if abs(f.sum() - 1.0) > 1e-6:
            raise ValidationError(f"{name} frequencies sum to {f.sum()!r}, not 1")
    return _psi_from_freqs(actual_freq, expected_freq, None)


def competitive_ratio(alg_total: float, opt_total: float) -> float:
    """Realized algorithm value over the hindsight optimum."""
    if opt_total <= 0:
        raise UndefinedMetricError(f"hindsight total {opt_total} is not positive")
    return float(alg_total) / float(opt_total)


def wilcoxon_signed_rank(x, y) -> float:
    """Two-sided signed-rank test p-value for paired samples.

    Zero differences are dropped; ties share average ranks. Exact null
    distribution (dynamic program over doubled ranks) up to n=25 pairs,
    tie-corrected normal approximation with continuity correction above.
    All-zero differences give p = 1.
    """
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    if d.ndim != 1 or len(np.asarray(x)) != len(np.asarray(y)):
        raise ValidationError("wilcoxon_signed_rank needs equal-length 1-d samples")
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    ranks = rankdata(np.abs(d))
    w_pos = float(ranks[d > 0].sum())

    if n <= WILCOXON_EXACT_MAX_N:
        # double the (possibly half-integer) ranks to land on integers
        r2 = np.rint(ranks * 2).astype(np.int64)
        total = int(r2.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in r2:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: counts.size - r]
            counts = counts + shifted
        probs = counts / (2.0**n)
        w2 = int(round(w_pos * 2))
        p_lo = float(probs[: w2 + 1].sum())
        p_hi = float(probs[w2:].sum())
        return min(1.0, 2.0 * min(p_lo, p_hi))

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    if var <= 0:
        return 1.0
    z = (w_pos - mean - 0.5 * math.copysign(1.0, w_pos - mean)) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


@dataclass
class RatioSummary:
    policy: str
    b: int
    method: str
    n_runs: int
    mean_ratio: float
    std_ratio: float
    p_value_vs_baseline: float | None = None
    baseline: str | None = None


def summarize_ratios(
    policy: str,
    b: int,
    method: str,
    ratios,
    baseline_ratios=None,
    baseline_label: str | None = None,
) -> RatioSummary:
    """Mean/stdev of per-run ratios, with a paired signed-rank p-value when a
    baseline run set (same seeds, same length) is supplied."""
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.size == 0:
        raise UndefinedMetricError("no ratios to summarize")
    p_value = None
    if baseline_ratios is not None:
        p_value = wilcoxon_signed_rank(ratios, np.asarray(baseline_ratios, dtype=np.float64))
    return RatioSummary(
        policy=policy,
        b=int(b),
        method=method,
        n_runs=int(ratios.size),
        mean_ratio=float(ratios.mean()),
        std_ratio=float(ratios.std(ddof=1)) if ratios.size > 1 else 0.0,
        p_value_vs_baseline=p_value,
        baseline=baseline_label,
    )
