"""Dispatch plan construction, validation, and serialization."""

import numpy as np
import pytest
from scipy.optimize import linprog

from coarsematch.clustering import cluster_patients
from coarsematch.errors import PlanInconsistencyError, ValidationError
from coarsematch.lp import (
    build_lp,
    load_plan,
    make_plan,
    plan_consistent_with,
    plan_from_dict,
    plan_to_dict,
    plan_violations,
    save_plan,
)

from helpers import grouped_instance, homogeneous_instance, make_instance


def scipy_reference(problem):
    n_nodes = len(problem.node_ids)
    eu, ev = problem.edge_nodes, problem.edge_donors
    n_edges = eu.size
    A = np.zeros((n_nodes + len(problem.donor_ids), n_edges))
    for j in range(n_edges):
        A[eu[j], j] = problem.node_success[eu[j], ev[j]]
        A[n_nodes + ev[j], j] = 1.0
    c = problem.node_weights[eu, ev] * problem.node_success[eu, ev]
    rhs = np.concatenate([problem.capacities, problem.rates])
    res = linprog(-c, A_ub=A, b_ub=rhs, method="highs")
    assert res.status == 0
    return -res.fun


@pytest.mark.parametrize("seed", range(8))
def test_patient_level_plan_matches_scipy(seed):
    inst = make_instance(n_patients=12, n_donor_types=5, horizon=9, seed=seed, success_prob=0.8)
    problem = build_lp(inst)
    plan = make_plan(inst)
    assert plan.objective == pytest.approx(scipy_reference(problem), rel=1e-8, abs=1e-8)
    assert not plan_violations(plan)
    assert plan.dual_objective() == pytest.approx(plan.objective, rel=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_clustered_plan_matches_scipy(seed):
    inst = make_instance(n_patients=16, n_donor_types=4, horizon=10, seed=100 + seed)
    clustering = cluster_patients(inst, 4, "constrained_kmeans", seed=seed)
    problem = build_lp(inst, clustering)
    plan = make_plan(inst, clustering)
    assert plan.clustered
    assert plan.objective == pytest.approx(scipy_reference(problem), rel=1e-8, abs=1e-8)
    # cluster capacities are the true cluster sizes
    assert plan.capacities.tolist() == [float(len(c)) for c in clustering.clusters]


def test_homogeneous_plan_saturates():
    # 8 identical patients, p = 1, horizon 6: all arrival mass routed, value 6w
    inst = homogeneous_instance(group_size=8, horizon=6, weight=2.5)
    plan = make_plan(inst)
    assert plan.objective == pytest.approx(15.0, abs=1e-9)
    assert plan.flows.sum() == pytest.approx(6.0, abs=1e-9)


def test_capacity_binds_when_patients_scarce():
    # 2 patients, 10 expected arrivals at p = 0.5: each capacity row reads
    # 0.5 f <= 1 so f <= 2 per patient, total flow 4, objective w p f = 2.
    inst = homogeneous_instance(group_size=2, horizon=10, weight=1.0, success_prob=0.5)
    plan = make_plan(inst)
    used = (plan.flows * plan.node_success).sum(axis=1)
    assert np.all(used <= plan.capacities + 1e-8)
    assert plan.flows.sum() == pytest.approx(4.0, abs=1e-9)
    assert plan.objective == pytest.approx(2.0, abs=1e-9)


def test_success_prob_scales_capacity_row():
    # one patient, p = 0.25, plenty of arrivals: f can go to 4 but rate caps at 3
    inst = homogeneous_instance(group_size=1, horizon=3, weight=1.0, success_prob=0.25)
    plan = make_plan(inst)
    assert plan.flows[0, 0] == pytest.approx(3.0, abs=1e-9)
    assert plan.objective == pytest.approx(0.75, abs=1e-9)


def test_zero_reward_edges_carry_no_flow():
    inst = make_instance(n_patients=10, n_donor_types=4, seed=3, success_prob=0.9)
    inst.weights[2, :] = 0.0
    plan = make_plan(inst)
    assert np.all(plan.flows[2] == 0.0)


def test_plan_round_trip(tmp_path):
    inst = make_instance(n_patients=10, n_donor_types=4, horizon=7, seed=11)
    clustering = cluster_patients(inst, 2, "constrained_kmeans", seed=1)
    plan = make_plan(inst, clustering)
    path = tmp_path / "plan.json"
    save_plan(plan, path)
    loaded = load_plan(path)
    assert loaded.node_ids == plan.node_ids
    assert loaded.donor_ids == plan.donor_ids
    np.testing.assert_allclose(loaded.flows, plan.flows)
    np.testing.assert_allclose(loaded.duals_capacity, plan.duals_capacity)
    assert loaded.objective == pytest.approx(plan.objective)
    assert loaded.clustering is not None
    assert loaded.clustering.clusters == plan.clustering.clusters


def test_load_rejects_tampered_flows(tmp_path):
    inst = make_instance(seed=5)
    plan = make_plan(inst)
    doc = plan_to_dict(plan)
    # inflate a flow so a donor's arrival mass is exceeded
    doc["flows"] = [[u, v, f + 100.0] for u, v, f in doc["flows"][:1]] + doc["flows"][1:]
    with pytest.raises(ValidationError):
        plan_from_dict(doc)


def test_plan_consistency_guards():
    inst = make_instance(seed=6)
    other = make_instance(n_patients=7, seed=7)
    plan = make_plan(inst)
    plan_consistent_with(plan, inst)
    with pytest.raises(PlanInconsistencyError):
        plan_consistent_with(plan, other)


def test_grouped_instance_lp_value():
    # 2 groups x 3 patients, 2 donor types, horizon 6, p = 1. Weights force
    # donor 0 to group 0 (w = 4) and donor 1 to group 1 (w = 3); each donor
    # brings 3 expected arrivals and each group holds 3 patients.
    inst = grouped_instance(
        group_rows=[[4.0, 1.0], [1.0, 3.0]], group_size=3, horizon=6, rates=[3.0, 3.0]
    )
    plan = make_plan(inst)
    assert plan.objective == pytest.approx(4.0 * 3 + 3.0 * 3, abs=1e-9)
