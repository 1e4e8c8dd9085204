"""Scenario orchestration: paired Monte Carlo sweeps over capacities and policies.

A scenario fixes one instance, a grid of (capacity, clustering method) cells,
and a policy list. Every replication draws one arrival sequence shared by all
cells and policies (paired seeds), scores each policy against the hindsight
optimum of that sequence, and writes per-run CSVs plus summary, bound, and
timing tables. Seeds derive from (master_seed, stream, replication, policy
ordinals), so adding cells or policies never perturbs existing streams.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bounds import BoundReport, bound_report, measure_rho
from .clustering import cluster_patients, compute_cluster_errors
from .errors import ValidationError
from .instance import MatchingInstance, load_instance, save_instance
from .lp import make_plan
from .metrics import RatioSummary, competitive_ratio, psi, summarize_ratios
from .policies import (
    DISPATCH_MODES,
    INTRA_MODES,
    POLICY_KINDS,
    MatchRecord,
    PolicyConfig,
    hindsight_optimal,
    run_csm,
    run_greedy,
    run_random,
    run_sm_b,
    run_status_quo,
    total_realized,
)
from .synth import ARRIVAL_MODES, GeneratorConfig, generate_instance, sample_arrivals

RUN_CSV_FIELDS = ("round", "donor_type", "patient", "weight", "policy")


@dataclass
class ScenarioConfig:
    b_grid: list[int]
    policies: list[PolicyConfig]
    instance_path: str | None = None
    generator: GeneratorConfig | None = None
    methods: list[str] = field(default_factory=lambda: ["constrained_kmeans"])
    n_replications: int = 20
    arrival_mode: str = "poisson"
    master_seed: int = 0
    out_dir: str = "runs"


@dataclass
class CellTiming:
    b: int
    method: str
    cluster_seconds: float
    lp_seconds: float
    lp_iterations: int


@dataclass
class RunArtifact:
    scenario_hash: str
    out_dir: str
    arrival_mode: str
    summaries: list[RatioSummary]
    bounds: list[BoundReport]
    timings: list[CellTiming]
    failures: list[dict]
    run_files: list[str]
    opt_totals: list[float]  # hindsight optimum per replication
    ratios: dict[str, list[float]]  # "b|method|policy" -> per-replication ratios


def scenario_from_dict(data: dict) -> ScenarioConfig:
    try:
        gen = data.get("generator")
        policies = [
            PolicyConfig.from_spec(p)
            if isinstance(p, str)
            else PolicyConfig(
                kind=p["kind"],
                dispatch=p.get("dispatch", "discard"),
                intra_cluster=p.get("intra_cluster", "uniform_random"),
                seed=int(p.get("seed", 0)),
            )
            for p in data["policies"]
        ]
        return ScenarioConfig(
            b_grid=[int(b) for b in data["b_grid"]],
            policies=policies,
            instance_path=data.get("instance"),
            generator=GeneratorConfig(**gen) if gen is not None else None,
            methods=list(data.get("methods", ["constrained_kmeans"])),
            n_replications=int(data.get("n_replications", 20)),
            arrival_mode=data.get("arrival_mode", "poisson"),
            master_seed=int(data.get("master_seed", 0)),
            out_dir=data.get("out_dir", "runs"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed scenario config: {exc}") from exc


def _scenario_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _derive_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _policy_seed(master: int, rep: int, policy: PolicyConfig) -> int:
    return _derive_seed(
        master,
        2,
        rep,
        POLICY_KINDS.index(policy.kind),
        DISPATCH_MODES.index(policy.dispatch),
        INTRA_MODES.index(policy.intra_cluster),
        policy.seed,
    )


def _resolve_instance(cfg: ScenarioConfig):
    if (cfg.instance_path is None) == (cfg.generator is None):
        raise ValidationError("scenario needs exactly one of instance_path or generator")
    if cfg.instance_path is not None:
        return load_instance(cfg.instance_path), None
    return None, generate_instance(cfg.generator)


def _run_policy(policy, inst, clustering, plan, events, seed):
    if policy.kind == "sm_b":
        return run_sm_b(inst, plan, events, seed)
    if policy.kind == "csm":
        return run_csm(inst, clustering, plan, events, policy, seed)
    if policy.kind == "greedy":
        return run_greedy(inst, events, seed)
    if policy.kind == "status_quo":
        return run_status_quo(inst, events, seed)
    return run_random(inst, events, seed)


def _write_run_csv(path: Path, records: list[MatchRecord], label: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_CSV_FIELDS)
        for r in records:
            patient = "" if r.patient_id is None else r.patient_id
            writer.writerow(
                [r.round, r.donor_type_id, patient, repr(r.realized_weight), label]
            )


def run_scenario(cfg: ScenarioConfig) -> RunArtifact:
    if cfg.arrival_mode not in ARRIVAL_MODES:
        raise ValidationError(f"unknown arrival mode {cfg.arrival_mode!r}")
    if not cfg.b_grid or not cfg.policies:
        raise ValidationError("scenario needs a nonempty b_grid and policy list")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inst, generated = _resolve_instance(cfg)
    if generated is not None:
        inst = generated.instance
        save_instance(inst, out_dir / "instance.json")

    # paired arrival sequences and their hindsight optima, shared by all cells
    sequences = []
    opt_totals = []
    for rep in range(cfg.n_replications):
        seq = sample_arrivals(inst, _derive_seed(cfg.master_seed, 1, rep), cfg.arrival_mode)
        sequences.append(seq)
        opt_totals.append(hindsight_optimal(inst, seq.events)[1])

    eta = cfg.generator.eta if cfg.generator is not None else 0.0
    summaries: list[RatioSummary] = []
    bounds_rows: list[BoundReport] = []
    timings: list[CellTiming] = []
    failures: list[dict] = []
    run_files: list[str] = []
    ratios: dict[str, list[float]] = {}

    for b in cfg.b_grid:
        for method in cfg.methods:
            try:
                t0 = time.perf_counter()
                clustering = cluster_patients(inst, b, method, seed=_derive_seed(cfg.master_seed, 4, b))
                t1 = time.perf_counter()
                plan = make_plan(inst, clustering)
                t2 = time.perf_counter()
                timings.append(
                    CellTiming(
                        b=b,
                        method=method,
                        cluster_seconds=t1 - t0,
                        lp_seconds=t2 - t1,
                        lp_iterations=plan.iterations,
                    )
                )
                errors = compute_cluster_errors(inst, clustering)
                rho = 0.0
                if generated is not None and generated.bad_clusters:
                    bad_patients = [
                        u for c in generated.bad_clusters for u in generated.planted_clusters[c]
                    ]
                    rho = measure_rho(inst, [s.events for s in sequences[:5]], bad_patients)
                row = bound_report(
                    b,
                    errors.delta_max,
                    eta=eta,
                    rho=rho if np.isfinite(rho) else 0.0,
                    nmae_max=errors.nmae_max,
                )
                bounds_rows.append(row)
            except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
                failures.append({"b": b, "method": method, "stage": "plan", "error": str(exc)})
                continue

            cell_ratios: dict[str, list[float]] = {p.label: [] for p in cfg.policies}
            for rep, seq in enumerate(sequences):
                for policy in cfg.policies:
                    try:
                        records = _run_policy(
                            policy,
                            inst,
                            clustering,
                            plan,
                            seq.events,
                            _policy_seed(cfg.master_seed, rep, policy),
                        )
                    except Exception as exc:  # noqa: BLE001
                        failures.append(
                            {
                                "b": b,
                                "method": method,
                                "policy": policy.label,
                                "rep": rep,
                                "stage": "simulate",
                                "error": str(exc),
                            }
                        )
                        continue
                    name = f"run_b{b}_{method}_{policy.label}_r{rep:03d}.csv"
                    _write_run_csv(out_dir / name, records, policy.label)
                    run_files.append(name)
                    cell_ratios[policy.label].append(
                        competitive_ratio(total_realized(records), opt_totals[rep])
                    )

            baseline_label = cfg.policies[0].label
            for policy in cfg.policies:
                vals = cell_ratios[policy.label]
                if not vals:
                    continue
                ratios[f"{b}|{method}|{policy.label}"] = vals
                base = (
                    cell_ratios[baseline_label]
                    if policy.label != baseline_label and len(cell_ratios[baseline_label]) == len(vals)
                    else None
                )
                summaries.append(
                    summarize_ratios(
                        policy.label,
                        b,
                        method,
                        vals,
                        baseline_ratios=base,
                        baseline_label=baseline_label if base is not None else None,
                    )
                )

    artifact = RunArtifact(
        scenario_hash=_scenario_hash(cfg),
        out_dir=str(out_dir),
        arrival_mode=cfg.arrival_mode,
        summaries=summaries,
        bounds=bounds_rows,
        timings=timings,
        failures=failures,
        run_files=run_files,
        opt_totals=[float(x) for x in opt_totals],
        ratios=ratios,
    )
    _write_artifact(out_dir, artifact)
    return artifact


def _write_artifact(out_dir: Path, artifact: RunArtifact) -> None:
    write_summary_csv(out_dir / "summary.csv", artifact.summaries)
    write_bounds_csv(out_dir / "bounds.csv", artifact.bounds)
    with open(out_dir / "timings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b", "method", "cluster_seconds", "lp_seconds", "lp_iterations"])
        for t in artifact.timings:
            writer.writerow([t.b, t.method, repr(t.cluster_seconds), repr(t.lp_seconds), t.lp_iterations])
    if artifact.failures:
        with open(out_dir / "failures.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["b", "method", "policy", "rep", "stage", "error"])
            writer.writeheader()
            for row in artifact.failures:
                writer.writerow(row)
    blob = json.dumps(asdict(artifact), sort_keys=True, default=_json_default)
    (out_dir / "artifact.json").write_text(blob)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)!r}")


def write_summary_csv(path, summaries: list[RatioSummary]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["policy", "b", "method", "n_runs", "mean_ratio", "std_ratio", "p_value_vs_baseline", "baseline"]
        )
        for s in summaries:
            writer.writerow(
                [
                    s.policy,
                    s.b,
                    s.method,
                    s.n_runs,
                    repr(s.mean_ratio),
                    repr(s.std_ratio),
                    "" if s.p_value_vs_baseline is None else repr(s.p_value_vs_baseline),
                    s.baseline or "",
                ]
            )


def write_bounds_csv(path, rows: list[BoundReport]) -> None:
    cols = [
        "b",
        "alpha",
        "delta",
        "eta",
        "rho",
        "bound_uniform_error",
        "bound_with_estimation_error",
        "bound_with_bad_clusters",
        "bound_full",
        "nmae_max",
        "hcr",
        "opt_weighted_error",
        "alg_weighted_error",
        "bound_ex_post",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow(
                ["" if getattr(r, c) is None else repr(getattr(r, c)) for c in cols]
            )


@dataclass
class ReplanState:
    baseline_sample: np.ndarray  # compatible edge weights of the reference population
    min_size: int
    method: str
    seed: int
    last_psi: float | None = None


def make_replan_state(inst: MatchingInstance, min_size: int, method: str, seed: int = 0) -> ReplanState:
    return ReplanState(
        baseline_sample=inst.weights[inst.compatibility].copy(),
        min_size=min_size,
        method=method,
        seed=seed,
    )


def replan_on_drift(state: ReplanState, new_population: MatchingInstance, threshold: float):
    """Re-cluster and re-solve when the edge-weight distribution drifts.

    Compares the new population's compatible edge weights against the stored
    baseline by PSI. At or above the threshold, returns a fresh plan for the
    new population and resets the baseline; otherwise returns None.
    """
    sample = new_population.weights[new_population.compatibility]
    result = psi(sample, state.baseline_sample)
    state.last_psi = result.value
    if result.value < threshold:
        return None
    clustering = cluster_patients(new_population, state.min_size, state.method, seed=state.seed)
    plan = make_plan(new_population, clustering)
    state.baseline_sample = sample.copy()
    return plan
