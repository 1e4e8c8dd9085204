"""Online allocation policies and the hindsight benchmark.

All policies consume a fixed arrival sequence and emit one MatchRecord per
arrival. Plan-driven policies (run_sm_b, run_csm) route arrivals through the
LP flows via a shared kernel; greedy, tier-table, and random baselines act on
the instance directly. Realized utility always uses true patient weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._backend import run_dispatch
from .clustering import Clustering
from .errors import PlanInconsistencyError
from .instance import ArrivalEvent, MatchingInstance, PatientNode, DonorType, planar_distance_nm
from .lp import DispatchPlan, plan_consistent_with

DISPATCH_MODES = ("discard", "resample")
INTRA_MODES = ("uniform_random", "greedy")
POLICY_KINDS = ("sm_b", "csm", "greedy", "status_quo", "random")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "csm"
    dispatch: str = "discard"  # what to do when the routed node has no candidate
    intra_cluster: str = "uniform_random"  # how to pick among free compatible members
    seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.dispatch not in DISPATCH_MODES:
            raise ValueError(f"unknown dispatch mode {self.dispatch!r}")
        if self.intra_cluster not in INTRA_MODES:
            raise ValueError(f"unknown intra-cluster mode {self.intra_cluster!r}")

    @classmethod
    def from_spec(cls, text: str) -> "PolicyConfig":
        """Parse the "kind[:dispatch[:intra]]" shorthand, e.g. "csm:resample:greedy"."""
        parts = text.split(":")
        if len(parts) > 3:
            raise ValueError(f"policy spec {text!r} has more than three fields")
        return cls(
            kind=parts[0],
            dispatch=parts[1] if len(parts) > 1 else "discard",
            intra_cluster=parts[2] if len(parts) > 2 else "uniform_random",
        )

    @property
    def label(self) -> str:
        if self.kind in ("sm_b", "csm"):
            return f"{self.kind}-{self.dispatch}-{self.intra_cluster}"
        return self.kind


@dataclass(frozen=True)
class MatchRecord:
    round: int
    donor_type_id: str
    patient_id: str | None
    realized_weight: float
    success: bool
    candidate_available: bool = True  # a free compatible patient existed somewhere


def total_realized(records: list[MatchRecord]) -> float:
    return float(sum(r.realized_weight for r in records))


def _arrival_indices(inst: MatchingInstance, arrivals: list[ArrivalEvent]) -> np.ndarray:
    return np.array([inst.donor_index(a.donor_type_id) for a in arrivals], dtype=np.int32)


def make_success_table(inst: MatchingInstance, arrivals: list[ArrivalEvent], seed: int) -> np.ndarray:
    """Pre-drawn per-(patient, arrival) success outcomes, shared across policies.

    Lets paired comparisons at success probabilities below one hold the edge
    failures fixed while policies differ.
    """
    arr_v = _arrival_indices(inst, arrivals)
    draws = np.random.default_rng(seed).random((inst.n_patients, len(arrivals)))
    return (draws < inst.success_probs[:, arr_v]).astype(np.uint8)


def _routing_arrays(plan: DispatchPlan):
    n_nodes, n_v = plan.flows.shape
    indptr = np.zeros(n_v + 1, dtype=np.int64)
    nodes: list[np.ndarray] = []
    cums: list[np.ndarray] = []
    probs: list[np.ndarray] = []
    for v in range(n_v):
        rate = plan.rates[v]
        if rate > 0:
            pr = plan.flows[:, v] / rate
        else:
            pr = np.zeros(n_nodes)
        sel = np.flatnonzero(pr > 0)
        pr = pr[sel]
        cum = np.cumsum(pr)
        if cum.size and cum[-1] > 1.0 + 1e-9:
            raise PlanInconsistencyError(f"donor type {v}: routing mass {cum[-1]} exceeds 1")
        indptr[v + 1] = indptr[v] + sel.size
        nodes.append(sel.astype(np.int32))
        cums.append(cum)
        probs.append(pr)
    cat = lambda parts, dt: (
        np.concatenate(parts).astype(dt) if parts else np.zeros(0, dtype=dt)
    )
    return indptr, cat(nodes, np.int32), cat(cums, np.float64), cat(probs, np.float64)


def _membership_arrays(clusters: list[list[int]], n_patients: int):
    indptr = np.zeros(len(clusters) + 1, dtype=np.int64)
    idx = np.zeros(sum(len(c) for c in clusters), dtype=np.int32)
    cluster_of = np.full(n_patients, -1, dtype=np.int32)
    pos = 0
    for c, members in enumerate(clusters):
        for u in members:
            idx[pos] = u
            cluster_of[u] = c
            pos += 1
        indptr[c + 1] = pos
    return indptr, idx, cluster_of


def _run_plan_policy(
    inst: MatchingInstance,
    plan: DispatchPlan,
    arrivals: list[ArrivalEvent],
    *,
    dispatch: str,
    intra_cluster: str,
    seed: int,
    success_table: np.ndarray | None,
) -> list[MatchRecord]:
    plan_consistent_with(plan, inst)
    n_arr = len(arrivals)
    arr_v = _arrival_indices(inst, arrivals)
    uniforms = np.random.default_rng(seed).random((n_arr, 4))

    if plan.clustering is not None:
        clusters = plan.clustering.clusters
    else:
        clusters = [[i] for i in range(inst.n_patients)]
    memb_indptr, memb_idx, cluster_of = _membership_arrays(clusters, inst.n_patients)
    route_indptr, route_node, route_cum, route_prob = _routing_arrays(plan)

    if success_table is None:
        table = np.zeros((0, 0), dtype=np.uint8)
        use_table = 0
    else:
        table = np.ascontiguousarray(success_table, dtype=np.uint8)
        if table.shape != (inst.n_patients, n_arr):
            raise ValueError(f"success table shape {table.shape} != {(inst.n_patients, n_arr)}")
        use_table = 1

    matched = np.empty(n_arr, dtype=np.int32)
    success = np.empty(n_arr, dtype=np.uint8)
    had = np.empty(n_arr, dtype=np.uint8)
    run_dispatch(
        arr_v,
        np.ascontiguousarray(uniforms),
        route_indptr,
        route_node,
        route_cum,
        route_prob,
        memb_indptr,
        memb_idx,
        cluster_of,
        np.ascontiguousarray(inst.compatibility, dtype=np.uint8),
        np.ascontiguousarray(inst.weights),
        np.ascontiguousarray(inst.success_probs),
        DISPATCH_MODES.index(dispatch),
        INTRA_MODES.index(intra_cluster),
        table,
        use_table,
        matched,
        success,
        had,
    )
    return _to_records(inst, arrivals, arr_v, matched, success, had)


def _to_records(inst, arrivals, arr_v, matched, success, had) -> list[MatchRecord]:
    records = []
    for i, event in enumerate(arrivals):
        u = int(matched[i])
        ok = bool(success[i]) and u >= 0
        records.append(
            MatchRecord(
                round=event.round,
                donor_type_id=event.donor_type_id,
                patient_id=inst.patients[u].id if u >= 0 else None,
                realized_weight=float(inst.weights[u, arr_v[i]]) if ok else 0.0,
                success=ok,
                candidate_available=bool(had[i]),
            )
        )
    return records


def run_sm_b(
    inst: MatchingInstance,
    plan: DispatchPlan,
    arrivals: list[ArrivalEvent],
    seed: int = 0,
    *,
    success_table: np.ndarray | None = None,
) -> list[MatchRecord]:
    """Non-adaptive flow dispatch: attempt the planned edge, discard on failure."""
    return _run_plan_policy(
        inst,
        plan,
        arrivals,
        dispatch="discard",
        intra_cluster="uniform_random",
        seed=seed,
        success_table=success_table,
    )


def run_csm(
    inst: MatchingInstance,
    clustering: Clustering,
    plan: DispatchPlan,
    arrivals: list[ArrivalEvent],
    config: PolicyConfig | None = None,
    seed: int | None = None,
    *,
    success_table: np.ndarray | None = None,
) -> list[MatchRecord]:
    """Cluster-routed dispatch: route the arrival to a cluster by plan flows,
    then match a free compatible member (uniformly or greedily by true weight)."""
    if config is None:
        config = PolicyConfig(kind="csm")
    if plan.clustering is None:
        raise PlanInconsistencyError("run_csm needs a plan built over a clustering")
    if plan.clustering.clusters != clustering.clusters:
        raise PlanInconsistencyError("plan was built for a different clustering")
    return _run_plan_policy(
        inst,
        plan,
        arrivals,
        dispatch=config.dispatch,
        intra_cluster=config.intra_cluster,
        seed=config.seed if seed is None else seed,
        success_table=success_table,
    )


def _run_pointwise(inst, arrivals, seed, success_table, choose) -> list[MatchRecord]:
    """Shared loop for instance-level baselines; 2 uniforms per arrival."""
    n_arr = len(arrivals)
    arr_v = _arrival_indices(inst, arrivals)
    uniforms = np.random.default_rng(seed).random((n_arr, 2))
    free = np.ones(inst.n_patients, dtype=bool)
    matched = np.full(n_arr, -1, dtype=np.int32)
    success = np.zeros(n_arr, dtype=np.uint8)
    had = np.zeros(n_arr, dtype=np.uint8)
    for i in range(n_arr):
        v = int(arr_v[i])
        cand = free & inst.compatibility[:, v]
        had[i] = 1 if cand.any() else 0
        u = choose(v, cand, uniforms[i, 0])
        if u < 0:
            continue
        if success_table is not None:
            s = int(success_table[u, i])
        else:
            s = 1 if uniforms[i, 1] < inst.success_probs[u, v] else 0
        matched[i] = u
        success[i] = s
        free[u] = False
    return _to_records(inst, arrivals, arr_v, matched, success, had)


def run_greedy(
    inst: MatchingInstance,
    arrivals: list[ArrivalEvent],
    seed: int = 0,
    *,
    success_table: np.ndarray | None = None,
) -> list[MatchRecord]:
    """Match each arrival to the free compatible patient maximizing w * p.

    Ties go to the lowest patient index; the arrival is unmatched only when no
    free compatible patient remains.
    """
    expected = inst.weights * inst.success_probs

    def choose(v, cand, _draw):
        if not cand.any():
            return -1
        scores = np.where(cand, expected[:, v], -1.0)
        return int(scores.argmax())

    return _run_pointwise(inst, arrivals, seed, success_table, choose)


def run_random(
    inst: MatchingInstance,
    arrivals: list[ArrivalEvent],
    seed: int = 0,
    *,
    success_table: np.ndarray | None = None,
) -> list[MatchRecord]:
    """Match each arrival to a uniformly random free compatible patient."""

    def choose(v, cand, draw):
        idxs = np.flatnonzero(cand)
        if idxs.size == 0:
            return -1
        k = int(draw * idxs.size)
        if k >= idxs.size:
            k = idxs.size - 1
        return int(idxs[k])

    return _run_pointwise(inst, arrivals, seed, success_table, choose)


# priority tiers of the incumbent allocation policy, in printed order:
# (urgency status, blood match class, distance bound in nautical miles)
_TIER_ROWS: tuple[tuple[int, str, float], ...] = (
    (1, "P", 500), (1, "S", 500), (2, "P", 500), (2, "S", 500),
    (3, "P", 250), (3, "S", 250), (1, "P", 1000), (1, "S", 1000),
    (2, "P", 1000), (2, "S", 1000), (4, "P", 250), (4, "S", 250),
    (3, "P", 500), (3, "S", 500), (5, "P", 250), (5, "S", 250),
    (3, "P", 1000), (3, "S", 1000), (6, "P", 250), (6, "S", 250),
    (1, "P", 1500), (1, "S", 1500), (2, "P", 1500), (2, "S", 1500),
    (3, "P", 1500), (3, "S", 1500), (4, "P", 500), (4, "S", 500),
    (5, "P", 500), (5, "S", 500), (6, "P", 500), (6, "S", 500),
    (1, "P", 2500), (1, "S", 2500), (2, "P", 2500), (2, "S", 2500),
    (3, "P", 2500), (3, "S", 2500), (4, "P", 1000), (4, "S", 1000),
    (5, "P", 1000), (5, "S", 1000), (6, "P", 1000), (6, "S", 1000),
    (1, "P", float("inf")), (1, "S", float("inf")),
    (2, "P", float("inf")), (2, "S", float("inf")),
    (3, "P", float("inf")), (3, "S", float("inf")),
    (4, "P", 1500), (4, "S", 1500), (5, "P", 1500), (5, "S", 1500),
    (6, "P", 1500), (6, "S", 1500), (4, "P", 2500), (4, "S", 2500),
    (5, "P", 2500), (5, "S", 2500), (6, "P", 2500), (6, "S", 2500),
    (4, "P", float("inf")), (4, "S", float("inf")),
    (5, "P", float("inf")), (5, "S", float("inf")),
    (6, "P", float("inf")), (6, "S", float("inf")),
)

_NO_TIER = 127  # sentinel above every real tier


def _blood_match_class(donor_blood: str, patient_blood: str) -> str | None:
    """Primary = identical types; secondary = O donor to A or AB patient."""
    if donor_blood == patient_blood:
        return "P"
    if donor_blood == "O" and patient_blood in ("A", "AB"):
        return "S"
    return None


def status_quo_tier(patient: PatientNode, donor: DonorType) -> int | None:
    """First (lowest) priority tier whose status, blood class, and distance all
    hold; None when the pair falls outside the tier table."""
    cls = _blood_match_class(donor.blood_type, patient.blood_type)
    if cls is None:
        return None
    dist = planar_distance_nm(patient.location, donor.location)
    for tier, (status, row_cls, bound) in enumerate(_TIER_ROWS, start=1):
        if patient.status == status and cls == row_cls and dist <= bound:
            return tier
    return None


def _tier_matrix(inst: MatchingInstance) -> np.ndarray:
    tiers = np.full((inst.n_patients, inst.n_donor_types), _NO_TIER, dtype=np.int16)
    for u, patient in enumerate(inst.patients):
        for v, donor in enumerate(inst.donor_types):
            if not inst.compatibility[u, v]:
                continue  # the tier table never overrides instance compatibility
            t = status_quo_tier(patient, donor)
            if t is not None:
                tiers[u, v] = t
    return tiers


def run_status_quo(
    inst: MatchingInstance,
    arrivals: list[ArrivalEvent],
    seed: int = 0,
    *,
    success_table: np.ndarray | None = None,
) -> list[MatchRecord]:
    """Allocate by the incumbent priority tiers; seeded uniform tie-break
    within the best tier. Pairs outside the tier table are never matched."""
    tiers = _tier_matrix(inst)

    def choose(v, cand, draw):
        col = np.where(cand, tiers[:, v], _NO_TIER)
        best = int(col.min())
        if best >= _NO_TIER:
            return -1
        ties = np.flatnonzero(col == best)
        k = int(draw * ties.size)
        if k >= ties.size:
            k = ties.size - 1
        return int(ties[k])

    return _run_pointwise(inst, arrivals, seed, success_table, choose)


def hindsight_optimal(
    inst: MatchingInstance,
    arrivals: list[ArrivalEvent],
    success_table: np.ndarray | None = None,
) -> tuple[list[tuple[int, int]], float]:
    """Max-weight offline matching of the realized arrival sequence.

    Each arrival may serve at most one patient and vice versa. With no success
    table, matches are treated as certain (the benchmark convention); with
    one, edges that would fail are dropped. Returns (edges, total) where edges
    are (patient index, arrival position) pairs with positive weight.
    """
    if not arrivals:
        return [], 0.0
    arr_v = _arrival_indices(inst, arrivals)
    W = (inst.weights * inst.compatibility)[:, arr_v]
    if success_table is not None:
        W = W * success_table
    rows, cols = linear_sum_assignment(W, maximize=True)
    edges = [(int(u), int(t)) for u, t in zip(rows, cols) if W[u, t] > 0]
    total = float(W[rows, cols].sum())
    return edges, total
