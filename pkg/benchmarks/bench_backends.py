"""Throughput comparison of the compiled and pure-Python dispatch kernels.

Drives both kernels on identical raw arrays (same arrivals, same uniforms)
and reports arrivals dispatched per second plus the speedup. Usage:

    python3 benchmarks/bench_backends.py [--patients N] [--arrivals N] [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import coarsematch._dispatch_py as pure
from coarsematch.clustering import cluster_patients
from coarsematch.lp import make_plan
from coarsematch.policies import _arrival_indices, _membership_arrays, _routing_arrays
from coarsematch.synth import GeneratorConfig, generate_instance, sample_arrivals

try:
    import coarsematch._kernels as compiled
except ImportError:
    compiled = None


def build_kernel_args(n_patients: int, n_arrivals: int, b: int, seed: int):
    cfg = GeneratorConfig(
        n_patients=n_patients,
        n_clusters_planted=8,
        feature_dim=8,
        n_donor_types=32,
        horizon=n_arrivals,
        noise_delta=0.05,
        seed=seed,
    )
    inst = generate_instance(cfg).instance
    clustering = cluster_patients(inst, b, "constrained_kmeans", seed=seed)
    plan = make_plan(inst, clustering)
    seq = sample_arrivals(inst, seed, "iid_rounds")

    arr_v = _arrival_indices(inst, seq.events)
    uniforms = np.random.default_rng(seed).random((arr_v.size, 4))
    memb_indptr, memb_idx, cluster_of = _membership_arrays(
        clustering.clusters, inst.n_patients
    )
    route_indptr, route_node, route_cum, route_prob = _routing_arrays(plan)
    return (
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
        1,  # resample dispatch exercises the renormalization path
        1,  # greedy intra-cluster pick
        np.zeros((0, 0), dtype=np.uint8),
        0,
    )


def time_kernel(module, args, n_arr: int, repeat: int) -> float:
    matched = np.empty(n_arr, dtype=np.int32)
    success = np.empty(n_arr, dtype=np.uint8)
    had = np.empty(n_arr, dtype=np.uint8)
    module.run_dispatch(*args, matched, success, had)  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        module.run_dispatch(*args, matched, success, had)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--patients", type=int, default=1000)
    parser.add_argument("--arrivals", type=int, default=2000)
    parser.add_argument("--b", type=int, default=25)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    ns = parser.parse_args()

    args = build_kernel_args(ns.patients, ns.arrivals, ns.b, ns.seed)
    n_arr = args[0].size
    print(f"{ns.patients} patients, {n_arr} arrivals, b={ns.b}, best of {ns.repeat}")

    t_pure = time_kernel(pure, args, n_arr, ns.repeat)
    print(f"  python   {t_pure * 1e3:8.2f} ms  ({n_arr / t_pure:,.0f} arrivals/s)")
    if compiled is None:
        print("  compiled kernel not built; run pip install -e . first")
        return 1
    t_comp = time_kernel(compiled, args, n_arr, ns.repeat)
    print(f"  compiled {t_comp * 1e3:8.2f} ms  ({n_arr / t_comp:,.0f} arrivals/s)")
    print(f"  speedup  {t_pure / t_comp:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
