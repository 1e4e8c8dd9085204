"""Synthetic instance generation with planted cluster structure.

Patients come in blood-homogeneous planted groups sharing a center utility
row; member rows are the center times (1 + xi) with mean-centered noise
bounded by noise_delta, so the measured per-cluster spread of the planted
partition never exceeds the configured level. Optional knobs add weight
estimation error (eta) and low-value write-off groups. Donor discretization
condenses a historical donor pool into typed arrival classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isfinite

import numpy as np

from .clustering import kmeans
from .errors import InvalidCapacityError, ValidationError
from .instance import (
    BLOOD_TYPES,
    ArrivalEvent,
    DonorType,
    MatchingInstance,
    PatientNode,
    abo_compatible,
    validate_instance,
)

ARRIVAL_MODES = ("poisson", "iid_rounds")

# planar service region, nautical miles; spans all tier distance bands
REGION_SIZE = 3000.0


@dataclass
class GeneratorConfig:
    n_patients: int = 64
    n_clusters_planted: int = 4
    feature_dim: int = 34
    n_donor_types: int = 8
    horizon: int = 32
    noise_delta: float = 0.0  # relative weight spread within a planted group
    eta: float = 0.0  # relative error between emitted and true weights
    bad_cluster_fraction: float = 0.0
    bad_cluster_value_share: float = 0.01  # center scale factor for bad groups
    blood_type_frequencies: tuple[float, float, float, float] = (0.45, 0.40, 0.11, 0.04)
    success_prob: float = 1.0
    seed: int = 0


@dataclass
class GeneratedInstance:
    instance: MatchingInstance
    planted_clusters: list[list[int]]
    true_weights: np.ndarray | None  # differs from emitted weights iff eta > 0
    bad_clusters: list[int]


def _validate_config(cfg: GeneratorConfig) -> None:
    if cfg.n_clusters_planted < 1 or cfg.n_patients < cfg.n_clusters_planted:
        raise ValidationError("need 1 <= n_clusters_planted <= n_patients")
    if cfg.n_donor_types < 1 or cfg.horizon < 1 or cfg.feature_dim < 1:
        raise ValidationError("n_donor_types, horizon, feature_dim must be positive")
    if not 0 <= cfg.noise_delta < 1:
        raise ValidationError(f"noise_delta={cfg.noise_delta} outside [0, 1)")
    if not 0 <= cfg.eta < 0.5:
        raise ValidationError(f"eta={cfg.eta} outside [0, 0.5)")
    if not 0 <= cfg.bad_cluster_fraction <= 1:
        raise ValidationError("bad_cluster_fraction outside [0, 1]")
    if not 0 < cfg.bad_cluster_value_share <= 1:
        raise ValidationError("bad_cluster_value_share outside (0, 1]")
    if not 0 <= cfg.success_prob <= 1:
        raise ValidationError("success_prob outside [0, 1]")
    freqs = np.asarray(cfg.blood_type_frequencies, dtype=np.float64)
    if freqs.shape != (4,) or np.any(freqs < 0) or abs(freqs.sum() - 1.0) > 1e-9:
        raise ValidationError("blood_type_frequencies must be 4 nonnegative reals summing to 1")


def generate_instance(cfg: GeneratorConfig) -> GeneratedInstance:
    """Deterministic in (config, seed): same inputs give identical bytes on disk."""
    _validate_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    freqs = np.asarray(cfg.blood_type_frequencies, dtype=np.float64)
    k = cfg.n_clusters_planted
    n, n_v = cfg.n_patients, cfg.n_donor_types

    donor_bloods = [BLOOD_TYPES[i] for i in rng.choice(4, size=n_v, p=freqs)]
    cluster_bloods = [BLOOD_TYPES[i] for i in rng.choice(4, size=k, p=freqs)]

    base = n // k
    sizes = [base + (1 if c < n % k else 0) for c in range(k)]
    planted: list[list[int]] = []
    start = 0
    for s in sizes:
        planted.append(list(range(start, start + s)))
        start += s

    n_bad = int(round(cfg.bad_cluster_fraction * k))
    bad = sorted(int(c) for c in rng.choice(k, size=n_bad, replace=False)) if n_bad else []

    centers = rng.uniform(0.5, 10.0, size=(k, n_v))
    for c in range(k):
        for v in range(n_v):
            if not abo_compatible(donor_bloods[v], cluster_bloods[c]):
                centers[c, v] = 0.0
    for c in bad:
        centers[c] *= cfg.bad_cluster_value_share

    weights = np.zeros((n, n_v))
    for c, members in enumerate(planted):
        xi = rng.uniform(-cfg.noise_delta, cfg.noise_delta, size=(len(members), n_v))
        xi -= xi.mean(axis=0)  # mean-centered so the group mean equals the center
        mx = np.abs(xi).max(axis=0)
        over = mx > cfg.noise_delta
        if np.any(over):
            xi[:, over] *= cfg.noise_delta / mx[over]
        weights[members] = centers[c] * (1.0 + xi)

    true_weights = None
    if cfg.eta > 0:
        phi = rng.uniform(1.0 - cfg.eta, 1.0 + cfg.eta, size=(n, n_v))
        true_weights = weights * phi

    feature_centers = rng.normal(0.0, 5.0, size=(k, cfg.feature_dim))
    patients = []
    for c, members in enumerate(planted):
        feats = feature_centers[c] + rng.normal(0.0, 1.0, size=(len(members), cfg.feature_dim))
        for row, i in enumerate(members):
            patients.append(
                PatientNode(
                    id=f"p{i:04d}",
                    features=tuple(float(x) for x in feats[row]),
                    blood_type=cluster_bloods[c],
                    status=int(rng.integers(1, 7)),
                    location=(
                        float(rng.uniform(0, REGION_SIZE)),
                        float(rng.uniform(0, REGION_SIZE)),
                    ),
                )
            )

    raw_rates = rng.uniform(0.5, 1.5, size=n_v)
    rates = raw_rates / raw_rates.sum() * cfg.horizon
    rates[-1] += cfg.horizon - rates.sum()
    donor_types = []
    for v in range(n_v):
        donor_types.append(
            DonorType(
                id=f"d{v:03d}",
                blood_type=donor_bloods[v],
                features=tuple(float(x) for x in rng.normal(0.0, 1.0, size=cfg.feature_dim)),
                arrival_rate=float(rates[v]),
                location=(
                    float(rng.uniform(0, REGION_SIZE)),
                    float(rng.uniform(0, REGION_SIZE)),
                ),
            )
        )

    compat = np.array(
        [
            [abo_compatible(d, pb) for d in donor_bloods]
            for pb in (p.blood_type for p in patients)
        ]
    )
    inst = MatchingInstance(
        patients=patients,
        donor_types=donor_types,
        weights=weights,
        success_probs=np.where(compat, cfg.success_prob, 0.0),
        compatibility=compat,
        horizon=cfg.horizon,
    )
    violations = validate_instance(inst)
    if violations:
        raise ValidationError("generator produced an invalid instance: " + "; ".join(violations))
    return GeneratedInstance(
        instance=inst,
        planted_clusters=planted,
        true_weights=true_weights,
        bad_clusters=bad,
    )


@dataclass
class ArrivalSequence:
    events: list[ArrivalEvent]
    mode: str
    seed: int


def sample_arrivals(inst: MatchingInstance, seed: int, mode: str = "poisson") -> ArrivalSequence:
    """Draw one arrival sequence.

    poisson: independent per-type counts with the type's arrival rate as mean,
    shuffled together (sequence length varies). iid_rounds: exactly `horizon`
    rounds, each type drawn with probability rate/horizon.
    """
    if mode not in ARRIVAL_MODES:
        raise ValidationError(f"unknown arrival mode {mode!r}; choose from {ARRIVAL_MODES}")
    rng = np.random.default_rng(seed)
    rates = inst.arrival_rates
    if mode == "poisson":
        counts = rng.poisson(rates)
        seq = np.repeat(np.arange(inst.n_donor_types), counts)
        seq = seq[rng.permutation(seq.size)]
    else:
        seq = rng.choice(inst.n_donor_types, size=inst.horizon, p=rates / rates.sum())
    events = [
        ArrivalEvent(round=i + 1, donor_type_id=inst.donor_types[int(v)].id)
        for i, v in enumerate(seq)
    ]
    return ArrivalSequence(events=events, mode=mode, seed=seed)


@dataclass
class DiscretizedDonorType:
    blood_type: str
    centroid: np.ndarray
    arrival_fraction: float  # share of the historical pool in this type


@dataclass
class GroupFit:
    ase: float  # mean squared distance to the assigned centroid
    variance: float  # mean squared distance to the group mean
    explained: float  # 1 - ase / variance (1.0 when the group is constant)


@dataclass
class DonorDiscretization:
    types: list[DiscretizedDonorType]
    per_group: dict[str, GroupFit] = field(default_factory=dict)
    overall_ase: float = 0.0
    overall_explained: float = 0.0


def discretize_donors(
    pools: dict[str, np.ndarray],
    k: int | dict[str, int],
    seed: int = 0,
) -> DonorDiscretization:
    """Condense historical donors into typed classes, blood group by group.

    Each group is clustered on donor attributes; a type's arrival fraction is
    the share of all historical donors assigned to it. Requesting as many
    types as donors reproduces the pool exactly (zero squared error).
    """
    if not pools:
        raise ValidationError("empty donor pool")
    rng = np.random.default_rng(seed)
    total = sum(len(np.atleast_2d(p)) for p in pools.values())
    types: list[DiscretizedDonorType] = []
    per_group: dict[str, GroupFit] = {}
    sq_err_sum = 0.0
    var_sum = 0.0
    for blood in sorted(pools):
        pts = np.atleast_2d(np.asarray(pools[blood], dtype=np.float64))
        kg = k[blood] if isinstance(k, dict) else int(k)
        if not 1 <= kg <= len(pts):
            raise InvalidCapacityError(
                f"group {blood}: k={kg} outside 1..{len(pts)} donors"
            )
        labels, centers = kmeans(pts, kg, rng)
        d2 = ((pts - centers[labels]) ** 2).sum(axis=1)
        ase = float(d2.mean())
        variance = float(((pts - pts.mean(axis=0)) ** 2).sum(axis=1).mean())
        explained = 1.0 - ase / variance if variance > 0 else 1.0
        per_group[blood] = GroupFit(ase=ase, variance=variance, explained=explained)
        sq_err_sum += float(d2.sum())
        var_sum += variance * len(pts)
        for c in range(kg):
            count = int((labels == c).sum())
            types.append(
                DiscretizedDonorType(
                    blood_type=blood,
                    centroid=centers[c].copy(),
                    arrival_fraction=count / total,
                )
            )
    overall_ase = sq_err_sum / total
    overall_explained = 1.0 - sq_err_sum / var_sum if var_sum > 0 else 1.0
    if not isfinite(overall_explained):
        overall_explained = 1.0
    return DonorDiscretization(
        types=types,
        per_group=per_group,
        overall_ase=overall_ase,
        overall_explained=overall_explained,
    )
