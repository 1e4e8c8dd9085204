"""Small instance factories shared across test modules."""

from __future__ import annotations

import numpy as np

from coarsematch.instance import (
    DonorType,
    MatchingInstance,
    PatientNode,
    abo_compatible,
)


def make_instance(
    *,
    n_patients=6,
    n_donor_types=3,
    horizon=5,
    seed=0,
    success_prob=1.0,
    single_blood=False,
):
    """Random valid instance; weights respect ABO compatibility."""
    rng = np.random.default_rng(seed)
    bloods = ["O", "A", "B", "AB"]
    patients = []
    for i in range(n_patients):
        patients.append(
            PatientNode(
                id=f"p{i:04d}",
                features=tuple(rng.normal(size=3).round(6)),
                blood_type="O" if single_blood else bloods[rng.integers(4)],
                status=int(rng.integers(1, 7)),
                location=(float(rng.uniform(0, 3000)), float(rng.uniform(0, 3000))),
            )
        )
    donors = []
    raw = rng.uniform(0.5, 1.5, n_donor_types)
    rates = raw / raw.sum() * horizon
    rates[-1] += horizon - rates.sum()
    for j in range(n_donor_types):
        donors.append(
            DonorType(
                id=f"d{j:03d}",
                blood_type="O" if single_blood else bloods[rng.integers(4)],
                features=tuple(rng.normal(size=3).round(6)),
                arrival_rate=float(rates[j]),
                location=(float(rng.uniform(0, 3000)), float(rng.uniform(0, 3000))),
            )
        )
    compat = np.array(
        [[abo_compatible(d.blood_type, p.blood_type) for d in donors] for p in patients]
    )
    weights = rng.uniform(0.5, 10.0, (n_patients, n_donor_types))
    weights[~compat] = 0.0
    probs = np.where(compat, success_prob, 0.0)
    return MatchingInstance(
        patients=patients,
        donor_types=donors,
        weights=weights,
        success_probs=probs,
        compatibility=compat,
        horizon=horizon,
    )


def homogeneous_instance(*, group_size: int, horizon: int, weight=2.0, success_prob=1.0):
    """One pool of identical patients, one donor type carrying all arrival mass."""
    patients = [
        PatientNode(
            id=f"p{i:04d}",
            features=(0.0,),
            blood_type="O",
            status=1,
            location=(0.0, 0.0),
        )
        for i in range(group_size)
    ]
    donors = [
        DonorType(
            id="d000",
            blood_type="O",
            features=(0.0,),
            arrival_rate=float(horizon),
            location=(0.0, 0.0),
        )
    ]
    shape = (group_size, 1)
    return MatchingInstance(
        patients=patients,
        donor_types=donors,
        weights=np.full(shape, float(weight)),
        success_probs=np.full(shape, float(success_prob)),
        compatibility=np.ones(shape, dtype=bool),
        horizon=horizon,
    )


def grouped_instance(
    *,
    group_rows,
    group_size: int,
    horizon: int,
    rates=None,
    success_prob=1.0,
):
    """Planted groups of identical weight rows (one row template per group)."""
    group_rows = np.asarray(group_rows, dtype=float)
    k, n_v = group_rows.shape
    n = k * group_size
    patients = [
        PatientNode(
            id=f"p{i:04d}",
            features=(float(i // group_size),),
            blood_type="O",
            status=1,
            location=(0.0, 0.0),
        )
        for i in range(n)
    ]
    if rates is None:
        rates = np.full(n_v, horizon / n_v)
    rates = np.asarray(rates, dtype=float)
    rates[-1] += horizon - rates.sum()
    donors = [
        DonorType(
            id=f"d{j:03d}",
            blood_type="O",
            features=(0.0,),
            arrival_rate=float(rates[j]),
            location=(0.0, 0.0),
        )
        for j in range(n_v)
    ]
    weights = np.repeat(group_rows, group_size, axis=0)
    compat = np.ones((n, n_v), dtype=bool)
    return MatchingInstance(
        patients=patients,
        donor_types=donors,
        weights=weights,
        success_probs=np.full((n, n_v), float(success_prob)),
        compatibility=compat,
        horizon=horizon,
    )


def arrivals_of(indices, inst):
    """Build an arrival list from donor type indices."""
    from coarsematch.instance import ArrivalEvent

    return [
        ArrivalEvent(round=i + 1, donor_type_id=inst.donor_types[j].id)
        for i, j in enumerate(indices)
    ]
