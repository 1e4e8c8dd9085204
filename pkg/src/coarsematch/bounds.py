"""Performance-guarantee arithmetic for coarsened dispatch.

`alpha(b)` is the guaranteed fraction of the offline plan value a capacity-b
node retains under randomized dispatch; the bound_* fields discount it for
intra-cluster weight spread (delta), weight-estimation error (eta), and the
value share of deliberately written-off clusters (rho). `hcr` is the
clustering-quality heuristic used to pre-screen capacities, and the ex-post
errors re-weight measured cluster deltas by where the offline optimum and the
algorithm actually put their value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import Clustering, cluster_success_probs, compute_cluster_errors
from .errors import ValidationError
from .instance import ArrivalEvent, MatchingInstance
from .policies import hindsight_optimal


def _alpha_objective(b: float, eps: np.ndarray | float):
    return 1.0 - b ** (-0.5 + eps) - np.exp(-(b ** (2.0 * eps)) / 3.0)


def alpha(b: int | float) -> float:
    """Guaranteed per-node fraction of planned value at capacity b.

    Supremum over eps in (0, 1/2] of 1 - b^(-1/2+eps) - exp(-b^(2 eps)/3),
    clamped at zero (the guarantee is vacuous for small b).
    """
    if b < 1:
        raise ValidationError(f"capacity b={b} must be at least 1")
    b = float(b)
    if b == 1.0:
        return 0.0  # the objective is the constant -exp(-1/3)
    grid = np.linspace(1e-9, 0.5, 4097)
    vals = _alpha_objective(b, grid)
    i = int(vals.argmax())
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    x, fx = _golden_max(lambda e: float(_alpha_objective(b, e)), lo, hi)
    best = max(float(vals[i]), fx)
    return max(best, 0.0)


def _golden_max(f, lo, hi, tol=1e-12):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (a + b) / 2.0, max(fc, fd)


@dataclass
class BoundReport:
    b: int
    alpha: float
    delta: float
    eta: float
    rho: float
    bound_uniform_error: float  # alpha * (1 - 2 delta)
    bound_with_estimation_error: float  # (1 - 2 eta) * alpha * (1 - 2 delta)
    bound_with_bad_clusters: float  # alpha * (1 - rho) * (1 - 2 delta)
    bound_full: float  # (1 - 2 eta) * alpha * (1 - rho) * (1 - 2 delta)
    nmae_max: float | None = None
    hcr: float | None = None
    opt_weighted_error: float | None = None  # value-weighted delta over the optimum's edges
    alg_weighted_error: float | None = None  # value-weighted delta over the algorithm's edges
    bound_ex_post: float | None = None  # alpha * (1 - opt_err) * (1 - alg_err)


def _clamp01(x: float) -> float:
    if math.isnan(x):
        return 0.0
    return min(max(x, 0.0), 1.0)


def bound_report(
    b: int,
    delta: float,
    eta: float = 0.0,
    rho: float = 0.0,
    *,
    nmae_max: float | None = None,
    opt_weighted_error: float | None = None,
    alg_weighted_error: float | None = None,
) -> BoundReport:
    """Evaluate the guarantee family at one capacity; products clamp to [0, 1]."""
    if not (delta >= 0):
        raise ValidationError(f"delta={delta} must be nonnegative")
    if not 0 <= eta < 0.5:
        raise ValidationError(f"eta={eta} outside [0, 0.5)")
    if not 0 <= rho <= 1:
        raise ValidationError(f"rho={rho} outside [0, 1]")
    a = alpha(b)
    if math.isfinite(delta):
        base = a * (1.0 - 2.0 * delta)
    else:
        base = 0.0  # unbounded spread: no guarantee survives
    report = BoundReport(
        b=int(b),
        alpha=a,
        delta=float(delta),
        eta=float(eta),
        rho=float(rho),
        bound_uniform_error=_clamp01(base),
        bound_with_estimation_error=_clamp01((1.0 - 2.0 * eta) * base),
        bound_with_bad_clusters=_clamp01((1.0 - rho) * base),
        bound_full=_clamp01((1.0 - 2.0 * eta) * (1.0 - rho) * base),
        nmae_max=nmae_max,
        hcr=hcr(b, nmae_max) if nmae_max is not None else None,
        opt_weighted_error=opt_weighted_error,
        alg_weighted_error=alg_weighted_error,
    )
    if opt_weighted_error is not None and alg_weighted_error is not None:
        report.bound_ex_post = _clamp01(
            a * (1.0 - opt_weighted_error) * (1.0 - alg_weighted_error)
        )
    return report


def hcr(b: int | float, nmae_max: float) -> float:
    """Heuristic competitive ratio (1 - 1/sqrt(b)) * (1 - NMAE_max)."""
    if b < 1:
        raise ValidationError(f"capacity b={b} must be at least 1")
    if not 0 <= nmae_max <= 1:
        raise ValidationError(f"nmae_max={nmae_max} outside [0, 1]")
    return (1.0 - 1.0 / math.sqrt(b)) * (1.0 - nmae_max)


def select_capacity(grid: Sequence[tuple[int, float]]) -> tuple[int, float]:
    """Pick the capacity maximizing alpha(b) * (1 - 2 delta); smaller b on ties."""
    if not grid:
        raise ValidationError("empty capacity grid")
    best_b, best_score = None, -math.inf
    for b, delta in sorted(grid, key=lambda t: t[0]):
        score = alpha(b) * (1.0 - 2.0 * delta)
        if math.isnan(score) or not math.isfinite(delta):
            score = 0.0
        score = max(score, 0.0)
        if score > best_score:
            best_b, best_score = int(b), score
    return best_b, best_score


def ex_post_errors(
    opt_edges: Sequence[tuple[int, int]],
    alg_edges: Sequence[tuple[int, int]],
    clustering: Clustering,
    inst: MatchingInstance,
) -> tuple[float, float]:
    """Value-weighted cluster deltas over realized edge sets.

    Both edge lists hold (patient index, donor type index) pairs. The optimum
    side weights member deltas by true w*p; the algorithm side weights them by
    representative weight times cluster success probability, since that is the
    value stream the plan promised. Zero total value on a side yields NaN.
    """
    return ex_post_errors_mc([opt_edges], [alg_edges], clustering, inst)


def ex_post_errors_mc(
    opt_runs: Sequence[Sequence[tuple[int, int]]],
    alg_runs: Sequence[Sequence[tuple[int, int]]],
    clustering: Clustering,
    inst: MatchingInstance,
) -> tuple[float, float]:
    """Monte Carlo version: numerators and denominators average across runs."""
    clustering.require_match(inst)
    deltas = compute_cluster_errors(inst, clustering).delta_per_cluster
    labels = clustering.labels
    rep = clustering.representative_weights
    cluster_p = cluster_success_probs(inst, clustering.clusters)

    def one_side(runs, value_of):
        num = 0.0
        den = 0.0
        for edges in runs:
            for u, v in edges:
                value = value_of(u, v)
                num += deltas[labels[u]] * value
                den += value
        if den <= 0:
            return float("nan")
        return num / den

    opt_err = one_side(
        opt_runs, lambda u, v: inst.weights[u, v] * inst.success_probs[u, v]
    )
    alg_err = one_side(
        alg_runs, lambda u, v: rep[labels[u], v] * cluster_p[labels[u], v]
    )
    return opt_err, alg_err


def measure_rho(
    inst: MatchingInstance,
    arrivals_list: Sequence[list[ArrivalEvent]],
    bad_patients: Sequence[int],
) -> float:
    """Observed value share of a written-off patient set.

    Ratio of the mean best matching restricted to `bad_patients` to the mean
    unrestricted optimum, over the given arrival sequences.
    """
    bad = np.zeros(inst.n_patients, dtype=bool)
    bad[list(bad_patients)] = True
    restricted = _restricted_copy(inst, bad)
    num = 0.0
    den = 0.0
    for arrivals in arrivals_list:
        num += hindsight_optimal(restricted, arrivals)[1]
        den += hindsight_optimal(inst, arrivals)[1]
    if den <= 0:
        return float("nan")
    return num / den


def _restricted_copy(inst: MatchingInstance, keep_mask: np.ndarray) -> MatchingInstance:
    weights = inst.weights.copy()
    weights[~keep_mask] = 0.0
    return MatchingInstance(
        patients=inst.patients,
        donor_types=inst.donor_types,
        weights=weights,
        success_probs=inst.success_probs,
        compatibility=inst.compatibility,
        horizon=inst.horizon,
    )
