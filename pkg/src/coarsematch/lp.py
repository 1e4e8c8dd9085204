"""Offline dispatch plans: expected-flow LP over patients or clusters.

The plan maximizes expected matched value subject to two constraint families:
each node (patient, or cluster of size s) absorbs at most its capacity in
expected successful matches, and each donor type emits at most its arrival
mass in attempted matches. Flows divided by arrival rates become the online
routing probabilities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import (
    Clustering,
    cluster_compatibility,
    cluster_success_probs,
    clustering_from_dict,
    clustering_to_dict,
)
from .errors import PlanInconsistencyError, ValidationError
from .instance import MatchingInstance
from .simplex import SimplexResult, solve_two_nonzero_lp

FLOW_FEAS_TOL = 1e-8  # constraint slack tolerance for plan validation
GAP_REL_TOL = 1e-6  # primal-dual relative gap tolerance


@dataclass
class LpProblem:
    node_ids: list[str]
    donor_ids: list[str]
    capacities: np.ndarray  # per node
    rates: np.ndarray  # per donor type
    node_weights: np.ndarray  # (n_nodes, n_donors) objective weights
    node_success: np.ndarray  # (n_nodes, n_donors) capacity-row coefficients
    edge_nodes: np.ndarray  # edge -> node index
    edge_donors: np.ndarray  # edge -> donor index
    clustering: Clustering | None


@dataclass
class DispatchPlan:
    node_ids: list[str]
    donor_ids: list[str]
    capacities: np.ndarray
    rates: np.ndarray
    flows: np.ndarray  # (n_nodes, n_donors), zero off the LP's edge set
    node_success: np.ndarray
    objective: float
    duals_capacity: np.ndarray
    duals_rate: np.ndarray
    iterations: int
    clustering: Clustering | None

    @property
    def clustered(self) -> bool:
        return self.clustering is not None

    @property
    def dual_certificate(self) -> dict[str, np.ndarray]:
        return {"capacity": self.duals_capacity, "rate": self.duals_rate}

    def dual_objective(self) -> float:
        return float(self.duals_capacity @ self.capacities + self.duals_rate @ self.rates)


def build_lp(inst: MatchingInstance, clustering: Clustering | None = None) -> LpProblem:
    """Assemble the dispatch LP over patients, or clusters when given."""
    if clustering is None:
        node_ids = [p.id for p in inst.patients]
        caps = np.ones(inst.n_patients)
        wt = inst.weights
        ps = inst.success_probs
        compat = inst.compatibility
    else:
        clustering.require_match(inst)
        node_ids = [f"c{c:04d}" for c in range(clustering.n_clusters)]
        caps = clustering.sizes().astype(np.float64)
        wt = clustering.representative_weights
        ps = cluster_success_probs(inst, clustering.clusters)
        compat = cluster_compatibility(inst, clustering.clusters)

    # variables: compatible edges with positive expected reward
    useful = compat & (wt * ps > 0)
    edge_nodes, edge_donors = np.nonzero(useful)
    return LpProblem(
        node_ids=node_ids,
        donor_ids=[d.id for d in inst.donor_types],
        capacities=caps,
        rates=inst.arrival_rates,
        node_weights=np.asarray(wt, dtype=np.float64),
        node_success=np.asarray(ps, dtype=np.float64),
        edge_nodes=edge_nodes.astype(np.int64),
        edge_donors=edge_donors.astype(np.int64),
        clustering=clustering,
    )


def solve_lp(problem: LpProblem, *, max_iter: int | None = None) -> DispatchPlan:
    """Solve the dispatch LP and return a validated plan with duals."""
    n_nodes = len(problem.node_ids)
    n_donors = len(problem.donor_ids)
    eu, ev = problem.edge_nodes, problem.edge_donors
    obj = problem.node_weights[eu, ev] * problem.node_success[eu, ev]
    res: SimplexResult = solve_two_nonzero_lp(
        obj=obj,
        row_a=eu,
        coef_a=problem.node_success[eu, ev],
        row_b=n_nodes + ev,
        coef_b=np.ones(eu.size),
        n_rows=n_nodes + n_donors,
        rhs=np.concatenate([problem.capacities, problem.rates]),
        max_iter=max_iter,
    )
    flows = np.zeros((n_nodes, n_donors))
    flows[eu, ev] = res.x
    plan = DispatchPlan(
        node_ids=problem.node_ids,
        donor_ids=problem.donor_ids,
        capacities=np.asarray(problem.capacities, dtype=np.float64),
        rates=np.asarray(problem.rates, dtype=np.float64),
        flows=flows,
        node_success=problem.node_success,
        objective=res.objective,
        duals_capacity=res.duals[:n_nodes],
        duals_rate=res.duals[n_nodes:],
        iterations=res.iterations,
        clustering=problem.clustering,
    )
    violations = plan_violations(plan)
    if violations:
        raise ValidationError("solver produced an invalid plan: " + "; ".join(violations))
    return plan


def make_plan(
    inst: MatchingInstance,
    clustering: Clustering | None = None,
    *,
    max_iter: int | None = None,
) -> DispatchPlan:
    return solve_lp(build_lp(inst, clustering), max_iter=max_iter)


def plan_violations(plan: DispatchPlan) -> list[str]:
    """Feasibility and optimality-certificate checks on a plan."""
    out = []
    if np.any(plan.flows < -FLOW_FEAS_TOL):
        out.append("negative flow")
    used_capacity = (plan.flows * plan.node_success).sum(axis=1)
    if np.any(used_capacity > plan.capacities + FLOW_FEAS_TOL):
        worst = float((used_capacity - plan.capacities).max())
        out.append(f"node capacity exceeded by {worst:.3e}")
    used_rate = plan.flows.sum(axis=0)
    if np.any(used_rate > plan.rates + FLOW_FEAS_TOL):
        worst = float((used_rate - plan.rates).max())
        out.append(f"donor arrival mass exceeded by {worst:.3e}")
    gap = abs(plan.dual_objective() - plan.objective)
    if gap > GAP_REL_TOL * max(1.0, abs(plan.objective)):
        out.append(f"duality gap {gap:.3e} above tolerance")
    return out


def plan_consistent_with(plan: DispatchPlan, inst: MatchingInstance) -> None:
    """Raise unless the plan's donor types and nodes fit the instance."""
    if plan.donor_ids != [d.id for d in inst.donor_types]:
        raise PlanInconsistencyError("plan donor types do not match the instance")
    if plan.clustering is not None:
        plan.clustering.require_match(inst)
        if len(plan.node_ids) != plan.clustering.n_clusters:
            raise PlanInconsistencyError("plan node count does not match its clustering")
    elif plan.node_ids != [p.id for p in inst.patients]:
        raise PlanInconsistencyError("plan patient nodes do not match the instance")
    if np.any(plan.flows > plan.rates[None, :] + FLOW_FEAS_TOL):
        raise PlanInconsistencyError("an edge flow exceeds its donor arrival rate")


def plan_to_dict(plan: DispatchPlan) -> dict:
    nz = np.nonzero(plan.flows)
    return {
        "node_ids": list(plan.node_ids),
        "donor_ids": list(plan.donor_ids),
        "capacities": plan.capacities.tolist(),
        "rates": plan.rates.tolist(),
        "node_success": plan.node_success.tolist(),
        "objective": float(plan.objective),
        "iterations": int(plan.iterations),
        "flows": [
            [int(u), int(v), float(plan.flows[u, v])] for u, v in zip(*nz)
        ],
        "duals": {
            "capacity": plan.duals_capacity.tolist(),
            "rate": plan.duals_rate.tolist(),
        },
        "clustering": None if plan.clustering is None else clustering_to_dict(plan.clustering),
    }


def plan_from_dict(data: dict) -> DispatchPlan:
    try:
        n_nodes = len(data["node_ids"])
        n_donors = len(data["donor_ids"])
        flows = np.zeros((n_nodes, n_donors))
        for u, v, f in data["flows"]:
            flows[int(u), int(v)] = float(f)
        clustering = None
        if data.get("clustering") is not None:
            clustering = clustering_from_dict(data["clustering"])
        plan = DispatchPlan(
            node_ids=[str(s) for s in data["node_ids"]],
            donor_ids=[str(s) for s in data["donor_ids"]],
            capacities=np.array(data["capacities"], dtype=np.float64),
            rates=np.array(data["rates"], dtype=np.float64),
            flows=flows,
            node_success=np.array(data["node_success"], dtype=np.float64),
            objective=float(data["objective"]),
            duals_capacity=np.array(data["duals"]["capacity"], dtype=np.float64),
            duals_rate=np.array(data["duals"]["rate"], dtype=np.float64),
            iterations=int(data["iterations"]),
            clustering=clustering,
        )
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ValidationError(f"malformed plan document: {exc}") from exc
    violations = plan_violations(plan)
    if violations:
        raise ValidationError("invalid plan: " + "; ".join(violations))
    return plan


def save_plan(plan: DispatchPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), sort_keys=True))


def load_plan(path: str | Path) -> DispatchPlan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh))
