"""Coarsened online stochastic matching for organ allocation.

Builds capacity-b patient clusters, solves an expected-flow dispatch LP over
them, simulates online allocation policies against arrival sequences, and
reports performance guarantees and drift diagnostics.
"""

from ._backend import BACKEND
from .bounds import (
    BoundReport,
    alpha,
    bound_report,
    ex_post_errors,
    ex_post_errors_mc,
    hcr,
    measure_rho,
    select_capacity,
)
from .clustering import (
    Clustering,
    ClusterErrorReport,
    cluster_patients,
    compute_cluster_errors,
    load_clustering,
    repair_clusters,
    representative_weights,
    save_clustering,
)
from .errors import (
    InvalidCapacityError,
    PlanInconsistencyError,
    SolverLimitError,
    UndefinedMetricError,
    ValidationError,
)
from .instance import (
    ArrivalEvent,
    DonorType,
    MatchingInstance,
    PatientNode,
    load_instance,
    save_instance,
    validate_instance,
)
from .lp import DispatchPlan, build_lp, load_plan, make_plan, save_plan, solve_lp
from .metrics import (
    PsiResult,
    RatioSummary,
    competitive_ratio,
    psi,
    psi_prebinned,
    summarize_ratios,
    wilcoxon_signed_rank,
)
from .policies import (
    MatchRecord,
    PolicyConfig,
    hindsight_optimal,
    make_success_table,
    run_csm,
    run_greedy,
    run_random,
    run_sm_b,
    run_status_quo,
    status_quo_tier,
    total_realized,
)
from .runner import ReplanState, RunArtifact, ScenarioConfig, replan_on_drift, run_scenario
from .synth import (
    ArrivalSequence,
    DonorDiscretization,
    GeneratedInstance,
    GeneratorConfig,
    discretize_donors,
    generate_instance,
    sample_arrivals,
)

__version__ = "0.1.0"

__all__ = [
    "ArrivalEvent",
    "ArrivalSequence",
    "BACKEND",
    "BoundReport",
    "ClusterErrorReport",
    "Clustering",
    "DispatchPlan",
    "DonorDiscretization",
    "DonorType",
    "GeneratedInstance",
    "GeneratorConfig",
    "InvalidCapacityError",
    "MatchRecord",
    "MatchingInstance",
    "PatientNode",
    "PlanInconsistencyError",
    "PolicyConfig",
    "PsiResult",
    "RatioSummary",
    "ReplanState",
    "RunArtifact",
    "ScenarioConfig",
    "SolverLimitError",
    "UndefinedMetricError",
    "ValidationError",
    "alpha",
    "bound_report",
    "build_lp",
    "cluster_patients",
    "competitive_ratio",
    "compute_cluster_errors",
    "discretize_donors",
    "ex_post_errors",
    "ex_post_errors_mc",
    "generate_instance",
    "hcr",
    "hindsight_optimal",
    "load_clustering",
    "load_instance",
    "load_plan",
    "make_plan",
    "make_success_table",
    "measure_rho",
    "psi",
    "psi_prebinned",
    "repair_clusters",
    "replan_on_drift",
    "representative_weights",
    "run_csm",
    "run_greedy",
    "run_random",
    "run_scenario",
    "run_sm_b",
    "run_status_quo",
    "sample_arrivals",
    "save_clustering",
    "save_instance",
    "save_plan",
    "select_capacity",
    "solve_lp",
    "status_quo_tier",
    "summarize_ratios",
    "total_realized",
    "validate_instance",
    "wilcoxon_signed_rank",
]
