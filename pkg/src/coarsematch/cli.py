"""Command-line interface.

Subcommands mirror the pipeline: gen -> cluster -> plan -> simulate, with
bounds, evaluate, and scenario for reporting, re-scoring, and full sweeps.
Failures print the failing stage to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bounds import bound_report
from .clustering import METHODS, cluster_patients, compute_cluster_errors, load_clustering, save_clustering
from .instance import load_instance, save_instance
from .lp import load_plan, make_plan, save_plan
from .metrics import psi, summarize_ratios
from .policies import PolicyConfig, hindsight_optimal, total_realized
from .runner import (
    RUN_CSV_FIELDS,
    ScenarioConfig,
    run_scenario,
    scenario_from_dict,
    write_bounds_csv,
    write_summary_csv,
)
from .synth import GeneratorConfig, generate_instance, sample_arrivals


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out-dir", default=".", help="directory for outputs")
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="report format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coarsematch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic instance")
    _add_common(p)
    p.add_argument("--config", help="generator config JSON (defaults used when omitted)")
    p.add_argument("--out", default=None, help="instance output path")
    p.add_argument("--truth", default=None, help="also write planted structure JSON here")

    p = sub.add_parser("cluster", help="cluster patients at a capacity floor")
    _add_common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--b", type=int, required=True, help="minimum cluster size")
    p.add_argument("--method", default="constrained_kmeans")
    p.add_argument("--out", default=None)

    p = sub.add_parser("plan", help="solve the dispatch LP")
    _add_common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--clustering", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="run policies against sampled arrivals")
    _add_common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument(
        "--policy",
        action="append",
        required=True,
        help="kind[:dispatch[:intra]] e.g. csm:resample:greedy; repeatable",
    )
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--arrival-mode", default="poisson", choices=("poisson", "iid_rounds"))

    p = sub.add_parser("bounds", help="evaluate performance guarantees")
    _add_common(p)
    p.add_argument("--b-grid", default=None, help="comma-separated capacities")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--instance", default=None, help="measure delta from a clustering instead")
    p.add_argument("--clustering", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("evaluate", help="summarize finished runs, or score drift")
    _add_common(p)
    p.add_argument("--runs", default=None, help="directory produced by simulate/scenario")
    p.add_argument("--baseline-instance", default=None)
    p.add_argument("--actual-instance", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("scenario", help="run a full scenario config")
    _add_common(p)
    p.add_argument("--config", required=True)
    return parser


def _cmd_gen(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = GeneratorConfig(**json.load(fh))
    else:
        cfg = GeneratorConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    generated = generate_instance(cfg)
    out = Path(args.out) if args.out else Path(args.out_dir) / "instance.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(generated.instance, out)
    if args.truth:
        truth = {
            "planted_clusters": generated.planted_clusters,
            "bad_clusters": generated.bad_clusters,
            "true_weights": None
            if generated.true_weights is None
            else generated.true_weights.tolist(),
        }
        Path(args.truth).write_text(json.dumps(truth, sort_keys=True))
    print(out)
    return 0


def _cmd_cluster(args) -> int:
    inst = load_instance(args.instance)
    clustering = cluster_patients(inst, args.b, args.method, seed=args.seed or 0)
    out = Path(args.out) if args.out else Path(args.out_dir) / "clustering.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_clustering(clustering, out)
    print(out)
    return 0


def _cmd_plan(args) -> int:
    inst = load_instance(args.instance)
    clustering = load_clustering(args.clustering) if args.clustering else None
    plan = make_plan(inst, clustering)
    out = Path(args.out) if args.out else Path(args.out_dir) / "plan.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_plan(plan, out)
    print(out)
    return 0


def _cmd_simulate(args) -> int:
    from .runner import _derive_seed, _policy_seed, _run_policy, _write_run_csv

    inst = load_instance(args.instance)
    plan = load_plan(args.plan)
    policies = [PolicyConfig.from_spec(t) for t in args.policy]
    clustering = plan.clustering
    b = clustering.min_size if clustering is not None else 1
    method = clustering.method if clustering is not None else "none"
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = args.seed if args.seed is not None else 0

    ratio_lists: dict[str, list[float]] = {p.label: [] for p in policies}
    opt_totals: list[float] = []
    for rep in range(args.replications):
        seq = sample_arrivals(inst, _derive_seed(master, 1, rep), args.arrival_mode)
        opt = hindsight_optimal(inst, seq.events)[1]
        opt_totals.append(float(opt))
        for policy in policies:
            records = _run_policy(
                policy, inst, clustering, plan, seq.events, _policy_seed(master, rep, policy)
            )
            _write_run_csv(out_dir / f"run_b{b}_{method}_{policy.label}_r{rep:03d}.csv", records, policy.label)
            ratio_lists[policy.label].append(total_realized(records) / opt if opt > 0 else float("nan"))

    base_label = policies[0].label
    summaries = []
    for policy in policies:
        vals = ratio_lists[policy.label]
        base = ratio_lists[base_label] if policy.label != base_label else None
        summaries.append(
            summarize_ratios(
                policy.label, b, method, vals, baseline_ratios=base,
                baseline_label=base_label if base is not None else None,
            )
        )
    write_summary_csv(out_dir / "summary.csv", summaries)
    # enough of the scenario artifact for `evaluate --runs` to rescore
    (out_dir / "artifact.json").write_text(
        json.dumps({"opt_totals": opt_totals, "arrival_mode": args.arrival_mode}, sort_keys=True)
    )
    print(out_dir / "summary.csv")
    return 0


def _cmd_bounds(args) -> int:
    rows = []
    if args.instance and args.clustering:
        inst = load_instance(args.instance)
        clustering = load_clustering(args.clustering)
        errors = compute_cluster_errors(inst, clustering)
        rows.append(
            bound_report(
                clustering.min_size,
                errors.delta_max,
                eta=args.eta,
                rho=args.rho,
                nmae_max=errors.nmae_max,
            )
        )
    elif args.b_grid:
        for b in (int(s) for s in args.b_grid.split(",")):
            rows.append(bound_report(b, args.delta, eta=args.eta, rho=args.rho))
    else:
        raise ValueError("bounds needs either --b-grid or --instance with --clustering")
    out = Path(args.out) if args.out else Path(args.out_dir) / f"bounds.{args.format}"
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        out.write_text(json.dumps([asdict(r) for r in rows], sort_keys=True))
    else:
        write_bounds_csv(out, rows)
    print(out)
    return 0


def _split_run_name(stem: str) -> tuple[str, int, str, int]:
    # run_b{b}_{method}_{label}_r{rep}; method and label both contain
    # underscores, so match the method against the known vocabulary
    body = stem[len("run_b"):]
    b_part, rest = body.split("_", 1)
    label_rep, rep_part = rest.rsplit("_r", 1)
    for method in sorted((*METHODS, "none"), key=len, reverse=True):
        if label_rep.startswith(method + "_"):
            return label_rep[len(method) + 1:], int(b_part), method, int(rep_part)
    raise ValueError(f"unrecognized clustering method in run file {stem!r}")


def _read_run_totals(runs_dir: Path) -> dict[tuple[str, int, str], dict[int, float]]:
    totals: dict[tuple[str, int, str], dict[int, float]] = {}
    for path in sorted(runs_dir.glob("run_b*_r*.csv")):
        label, b, method, rep = _split_run_name(path.stem)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            assert tuple(reader.fieldnames) == RUN_CSV_FIELDS, path
            total = sum(float(row["weight"]) for row in reader)
        totals.setdefault((label, b, method), {})[rep] = total
    return totals


def _cmd_evaluate(args) -> int:
    if args.runs:
        runs_dir = Path(args.runs)
        artifact = json.loads((runs_dir / "artifact.json").read_text())
        opt = artifact["opt_totals"]
        totals = _read_run_totals(runs_dir)
        summaries = []
        for (label, b, method), by_rep in sorted(totals.items()):
            ratios = [by_rep[rep] / opt[rep] for rep in sorted(by_rep)]
            summaries.append(summarize_ratios(label, b, method, ratios))
        out = Path(args.out) if args.out else Path(args.out_dir) / f"summary.{args.format}"
        out.parent.mkdir(parents=True, exist_ok=True)
        if args.format == "json":
            out.write_text(json.dumps([asdict(s) for s in summaries], sort_keys=True))
        else:
            write_summary_csv(out, summaries)
        print(out)
        return 0
    if args.baseline_instance and args.actual_instance:
        base = load_instance(args.baseline_instance)
        actual = load_instance(args.actual_instance)
        rows = []
        for blood in ("O", "A", "B", "AB", "all"):
            if blood == "all":
                bm = np.ones(base.n_patients, dtype=bool)
                am = np.ones(actual.n_patients, dtype=bool)
            else:
                bm = np.array([p.blood_type == blood for p in base.patients])
                am = np.array([p.blood_type == blood for p in actual.patients])
            b_sample = base.weights[bm][base.compatibility[bm]]
            a_sample = actual.weights[am][actual.compatibility[am]]
            if b_sample.size == 0 or a_sample.size == 0:
                continue
            res = psi(a_sample, b_sample)
            rows.append({"group": blood, "psi": res.value, "classification": res.classification})
        out = Path(args.out) if args.out else Path(args.out_dir) / f"psi.{args.format}"
        out.parent.mkdir(parents=True, exist_ok=True)
        if args.format == "json":
            out.write_text(json.dumps(rows, sort_keys=True))
        else:
            with open(out, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=["group", "psi", "classification"])
                writer.writeheader()
                for row in rows:
                    writer.writerow(row)
        print(out)
        return 0
    raise ValueError("evaluate needs --runs, or --baseline-instance with --actual-instance")


def _cmd_scenario(args) -> int:
    with open(args.config) as fh:
        cfg = scenario_from_dict(json.load(fh))
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out_dir != ".":
        cfg.out_dir = args.out_dir
    artifact = run_scenario(cfg)
    print(Path(artifact.out_dir) / "summary.csv")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "cluster": _cmd_cluster,
    "plan": _cmd_plan,
    "simulate": _cmd_simulate,
    "bounds": _cmd_bounds,
    "evaluate": _cmd_evaluate,
    "scenario": _cmd_scenario,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
