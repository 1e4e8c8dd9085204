"""Matching instance model: patients, donor types, weights, and serialization.

An instance couples a fixed patient waitlist with a discretized set of donor
types. Donor types arrive online; `weights[u, v]` is the transplant benefit of
giving patient `u` an organ of type `v`, `success_probs[u, v]` the chance the
match survives post-match screening, and `compatibility[u, v]` whether the
edge exists at all. Arrival rates sum to the planning horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

BLOOD_TYPES = ("O", "A", "B", "AB")

# rate mass must match the horizon to this absolute tolerance
RATE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class PatientNode:
    id: str
    features: tuple[float, ...]
    blood_type: str
    status: int  # urgency status, 1 (most urgent) .. 6
    location: tuple[float, float]  # planar coordinates in nautical miles


@dataclass(frozen=True)
class DonorType:
    id: str
    blood_type: str
    features: tuple[float, ...]
    arrival_rate: float  # expected arrivals over the horizon
    location: tuple[float, float]


@dataclass(frozen=True)
class ArrivalEvent:
    round: int  # 1-based position in the arrival sequence
    donor_type_id: str


@dataclass
class MatchingInstance:
    patients: list[PatientNode]
    donor_types: list[DonorType]
    weights: np.ndarray  # (n_patients, n_donor_types), nonnegative
    success_probs: np.ndarray  # same shape, values in [0, 1]
    compatibility: np.ndarray  # same shape, bool
    horizon: int
    _patient_index: dict[str, int] = field(init=False, repr=False)
    _donor_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.success_probs = np.asarray(self.success_probs, dtype=np.float64)
        self.compatibility = np.asarray(self.compatibility, dtype=bool)
        self._patient_index = {p.id: i for i, p in enumerate(self.patients)}
        self._donor_index = {d.id: j for j, d in enumerate(self.donor_types)}

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_donor_types(self) -> int:
        return len(self.donor_types)

    @property
    def arrival_rates(self) -> np.ndarray:
        return np.array([d.arrival_rate for d in self.donor_types], dtype=np.float64)

    def patient_index(self, patient_id: str) -> int:
        return self._patient_index[patient_id]

    def donor_index(self, donor_type_id: str) -> int:
        return self._donor_index[donor_type_id]


def validate_instance(inst: MatchingInstance) -> list[str]:
    """Check structural invariants; returns a list of violation messages."""
    out: list[str] = []
    n_u, n_v = inst.n_patients, inst.n_donor_types
    shape = (n_u, n_v)

    if len(inst._patient_index) != n_u:
        out.append("duplicate patient ids")
    if len(inst._donor_index) != n_v:
        out.append("duplicate donor type ids")
    for p in inst.patients:
        if p.blood_type not in BLOOD_TYPES:
            out.append(f"patient {p.id}: unknown blood type {p.blood_type!r}")
        if not 1 <= p.status <= 6:
            out.append(f"patient {p.id}: status {p.status} outside 1..6")
    for d in inst.donor_types:
        if d.blood_type not in BLOOD_TYPES:
            out.append(f"donor type {d.id}: unknown blood type {d.blood_type!r}")
        if not (np.isfinite(d.arrival_rate) and d.arrival_rate >= 0):
            out.append(f"donor type {d.id}: arrival rate {d.arrival_rate} not a nonnegative real")

    if inst.weights.shape != shape:
        out.append(f"weights shape {inst.weights.shape} != {shape}")
    if inst.success_probs.shape != shape:
        out.append(f"success_probs shape {inst.success_probs.shape} != {shape}")
    if inst.compatibility.shape != shape:
        out.append(f"compatibility shape {inst.compatibility.shape} != {shape}")
    if out:
        return out  # shape mismatches make the entrywise checks meaningless

    if not np.all(np.isfinite(inst.weights)):
        out.append("weights contain non-finite entries")
    elif np.any(inst.weights < 0):
        out.append("weights contain negative entries")
    if np.any((inst.success_probs < 0) | (inst.success_probs > 1) | ~np.isfinite(inst.success_probs)):
        out.append("success_probs outside [0, 1]")
    if np.any(inst.weights[~inst.compatibility] != 0):
        out.append("nonzero weight on an incompatible edge")

    if not (isinstance(inst.horizon, (int, np.integer)) and inst.horizon > 0):
        out.append(f"horizon {inst.horizon!r} is not a positive integer")
    else:
        rate_sum = float(inst.arrival_rates.sum())
        if abs(rate_sum - inst.horizon) > RATE_SUM_TOL:
            out.append(
                f"arrival rates sum to {rate_sum!r}, horizon is {inst.horizon} "
                f"(tolerance {RATE_SUM_TOL})"
            )
    return out


def _require_valid(inst: MatchingInstance) -> MatchingInstance:
    violations = validate_instance(inst)
    if violations:
        raise ValidationError("; ".join(violations))
    return inst


def instance_to_dict(inst: MatchingInstance) -> dict:
    return {
        "horizon": int(inst.horizon),
        "patients": [
            {
                "id": p.id,
                "features": list(p.features),
                "blood_type": p.blood_type,
                "status": int(p.status),
                "location": list(p.location),
            }
            for p in inst.patients
        ],
        "donor_types": [
            {
                "id": d.id,
                "blood_type": d.blood_type,
                "features": list(d.features),
                "arrival_rate": float(d.arrival_rate),
                "location": list(d.location),
            }
            for d in inst.donor_types
        ],
        "weights": inst.weights.tolist(),
        "success_probs": inst.success_probs.tolist(),
        "compatibility": inst.compatibility.tolist(),
    }


def instance_from_dict(data: dict) -> MatchingInstance:
    try:
        patients = [
            PatientNode(
                id=str(p["id"]),
                features=tuple(float(x) for x in p["features"]),
                blood_type=str(p["blood_type"]),
                status=int(p["status"]),
                location=(float(p["location"][0]), float(p["location"][1])),
            )
            for p in data["patients"]
        ]
        donor_types = [
            DonorType(
                id=str(d["id"]),
                blood_type=str(d["blood_type"]),
                features=tuple(float(x) for x in d["features"]),
                arrival_rate=float(d["arrival_rate"]),
                location=(float(d["location"][0]), float(d["location"][1])),
            )
            for d in data["donor_types"]
        ]
        inst = MatchingInstance(
            patients=patients,
            donor_types=donor_types,
            weights=np.array(data["weights"], dtype=np.float64),
            success_probs=np.array(data["success_probs"], dtype=np.float64),
            compatibility=np.array(data["compatibility"], dtype=bool),
            horizon=int(data["horizon"]),
        )
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ValidationError(f"malformed instance document: {exc}") from exc
    return _require_valid(inst)


def load_instance(path: str | Path) -> MatchingInstance:
    """Load and validate a matching instance from a JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    return instance_from_dict(data)


def save_instance(inst: MatchingInstance, path: str | Path) -> None:
    """Validate and write an instance as JSON (stable key order)."""
    _require_valid(inst)
    Path(path).write_text(json.dumps(instance_to_dict(inst), sort_keys=True))


def abo_compatible(donor_blood: str, patient_blood: str) -> bool:
    """Transfusion compatibility: O gives to all, AB receives from all."""
    if donor_blood == "O":
        return True
    if donor_blood == patient_blood:
        return True
    return patient_blood == "AB" and donor_blood in ("A", "B")


def planar_distance_nm(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Euclidean distance between two points in nautical-mile coordinates."""
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))
