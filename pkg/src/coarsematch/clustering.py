"""Capacitated patient clustering over utility vectors.

Patients are grouped by similarity of their weight rows (not clinical
features): two patients land in one cluster when every donor type values them
alike. Three base partitioners are offered; a shared two-phase repair then
enforces the minimum cluster size b. Each cluster is summarized by its
arithmetic-mean weight row, and the worst relative deviation of any member
from that row is the cluster's error delta.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import cdist

from .errors import InvalidCapacityError, PlanInconsistencyError, UndefinedMetricError, ValidationError
from .instance import MatchingInstance

METHODS = ("constrained_kmeans", "constrained_agglomerative", "recursive_bisection")

# representative rows must equal member means to this relative tolerance
REPRESENTATIVE_TOL = 1e-12


@dataclass
class Clustering:
    method: str
    min_size: int
    patient_ids: list[str]
    clusters: list[list[int]]  # member patient indices, ascending
    representative_weights: np.ndarray  # (n_clusters, n_donor_types)
    delta_per_cluster: np.ndarray  # worst relative deviation; +inf sentinel
    delta_max: float  # max finite delta; +inf if no cluster has a finite one
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        self.representative_weights = np.asarray(self.representative_weights, dtype=np.float64)
        self.delta_per_cluster = np.asarray(self.delta_per_cluster, dtype=np.float64)
        labels = np.full(len(self.patient_ids), -1, dtype=np.int64)
        for c, members in enumerate(self.clusters):
            labels[members] = c
        self.labels = labels

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def assignments(self) -> dict[str, int]:
        return {self.patient_ids[i]: int(self.labels[i]) for i in range(len(self.patient_ids))}

    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.clusters], dtype=np.int64)

    def require_match(self, inst: MatchingInstance) -> None:
        if self.patient_ids != [p.id for p in inst.patients]:
            raise PlanInconsistencyError("clustering patient ids do not match the instance")


@dataclass
class ClusterErrorReport:
    nmae_per_node: np.ndarray
    nmae_per_cluster: np.ndarray
    nmae_mean: float
    nmae_max: float
    delta_per_cluster: np.ndarray
    delta_max: float
    w_max: float


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 200):
    """Lloyd's algorithm with k-means++ seeding; returns (labels, centers).

    Empty clusters are reseeded to the point farthest from its own center.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise InvalidCapacityError(f"k={k} outside 1..{n}")
    centers = _kmeanspp(points, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(n_iter):
        d2 = cdist(points, centers, "sqeuclidean")
        new_labels = d2.argmin(axis=1)
        own = d2[np.arange(n), new_labels]
        moved = False
        for c in range(k):
            if not np.any(new_labels == c):
                far = int(own.argmax())
                new_labels[far] = c
                own[far] = 0.0
                moved = True
        if not moved and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            sel = labels == c
            if np.any(sel):  # reseeding can transiently empty another cluster
                centers[c] = points[sel].mean(axis=0)
    return labels, centers


def _kmeanspp(points, k, rng):
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = cdist(points, centers[:1], "sqeuclidean")[:, 0]
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))  # duplicate points: any choice is equivalent
        centers[c] = points[idx]
        d2 = np.minimum(d2, cdist(points, centers[c : c + 1], "sqeuclidean")[:, 0])
    return centers


def repair_clusters(
    points: np.ndarray,
    clusters: list[list[int]],
    min_size: int,
    rng: np.random.Generator,
) -> list[list[int]]:
    """Enforce the size floor: merge undersized clusters, then split oversized.

    Merge phase walks undersized clusters smallest-first, sending each into the
    cluster with the nearest centroid, preferring partners that are themselves
    under capacity (ties: lowest position). Split phase bisects any cluster of
    size >= 2*min_size with seeded 2-means, falling back to a balanced median
    split along the inter-centroid axis when a 2-means half would be too small.
    """
    points = np.asarray(points, dtype=np.float64)
    work = [list(c) for c in clusters if len(c) > 0]
    cents = [points[c].mean(axis=0) for c in work]

    # merge phase
    while len(work) > 1:
        sizes = np.array([len(c) for c in work])
        under = np.flatnonzero(sizes < min_size)
        if under.size == 0:
            break
        src = int(under[np.argmin(sizes[under])])
        others = [i for i in range(len(work)) if i != src]
        under_others = [i for i in others if sizes[i] < min_size]
        pool = under_others if under_others else others
        dists = [float(np.linalg.norm(cents[src] - cents[i])) for i in pool]
        tgt = pool[int(np.argmin(dists))]
        merged = work[tgt] + work[src]
        cents[tgt] = points[merged].mean(axis=0)
        work[tgt] = merged
        del work[src], cents[src]

    # split phase
    out: list[list[int]] = []
    for members in work:
        _split_recursive(points, np.array(sorted(members)), min_size, rng, out)
    return [sorted(c) for c in out]


def _split_recursive(points, members, min_size, rng, out):
    n = len(members)
    if n < 2 * min_size:
        out.append(list(members))
        return
    sub = points[members]
    labels, centers = kmeans(sub, 2, rng)
    part_a = members[labels == labels[0]]  # part containing the lowest index first
    part_b = members[labels != labels[0]]
    if min(len(part_a), len(part_b)) < min_size:
        axis = centers[1] - centers[0]
        proj = sub @ axis
        order = np.argsort(proj, kind="stable")
        half = n // 2
        part_a = members[np.sort(order[:half])]
        part_b = members[np.sort(order[half:])]
    _split_recursive(points, part_a, min_size, rng, out)
    _split_recursive(points, part_b, min_size, rng, out)


def cluster_patients(
    inst: MatchingInstance,
    min_size: int,
    method: str = "constrained_kmeans",
    seed: int = 0,
) -> Clustering:
    """Partition patients into clusters of at least `min_size` by utility rows."""
    n = inst.n_patients
    if not 1 <= min_size <= n:
        raise InvalidCapacityError(f"min_size={min_size} not satisfiable with {n} patients")
    if method not in METHODS:
        raise ValueError(f"unknown clustering method {method!r}; choose from {METHODS}")

    points = inst.weights
    rng = np.random.default_rng(seed)
    if min_size == 1:
        clusters = [[i] for i in range(n)]
    else:
        k0 = n // min_size
        if k0 <= 1:
            clusters = [list(range(n))]
        elif method == "constrained_kmeans":
            labels, _ = kmeans(points, k0, rng)
            raw = [list(np.flatnonzero(labels == c)) for c in range(k0)]
            clusters = repair_clusters(points, raw, min_size, rng)
        elif method == "constrained_agglomerative":
            z = linkage(points, method="ward")
            labels = fcluster(z, t=k0, criterion="maxclust") - 1
            raw = [list(np.flatnonzero(labels == c)) for c in range(labels.max() + 1)]
            clusters = repair_clusters(points, raw, min_size, rng)
        else:  # recursive_bisection
            raw = [list(range(n))]
            clusters = repair_clusters(points, raw, min_size, rng)

    clusters = sorted([sorted(int(i) for i in c) for c in clusters], key=lambda c: c[0])
    rep = representative_weights(inst, clusters)
    deltas = _delta_per_cluster(inst.weights, clusters, rep)
    finite = deltas[np.isfinite(deltas)]
    delta_max = float(finite.max()) if finite.size else float("inf")
    return Clustering(
        method=method,
        min_size=min_size,
        patient_ids=[p.id for p in inst.patients],
        clusters=clusters,
        representative_weights=rep,
        delta_per_cluster=deltas,
        delta_max=delta_max,
    )


def representative_weights(inst: MatchingInstance, clusters: list[list[int]]) -> np.ndarray:
    """Arithmetic mean of member weight rows, one row per cluster."""
    rows = []
    for c, members in enumerate(clusters):
        if len(members) == 0:
            raise ValidationError(f"cluster {c} is empty")
        rows.append(inst.weights[members].mean(axis=0))
    return np.stack(rows)


def cluster_success_probs(inst: MatchingInstance, clusters: list[list[int]]) -> np.ndarray:
    """Mean member success probability per (cluster, donor type)."""
    return np.stack([inst.success_probs[members].mean(axis=0) for members in clusters])


def cluster_compatibility(inst: MatchingInstance, clusters: list[list[int]]) -> np.ndarray:
    """A cluster-donor edge exists when at least one member edge does."""
    return np.stack([inst.compatibility[members].any(axis=0) for members in clusters])


def _delta_per_cluster(weights, clusters, rep):
    deltas = np.zeros(len(clusters))
    for c, members in enumerate(clusters):
        bar = rep[c]
        block = weights[members]
        positive = bar > 0
        worst = 0.0
        if np.any(positive):
            ratios = block[:, positive] / bar[positive]
            worst = float(np.abs(ratios - 1.0).max())
        if np.any(block[:, ~positive] != 0):
            worst = float("inf")  # member weight where the representative is zero
        deltas[c] = worst
    return deltas


def compute_cluster_errors(inst: MatchingInstance, clustering: Clustering) -> ClusterErrorReport:
    """Per-node and per-cluster deviation of true weights from representatives.

    NMAE of a node is its mean absolute deviation from the representative row,
    normalized by the global maximum weight.
    """
    clustering.require_match(inst)
    w = inst.weights
    w_max = float(w.max()) if w.size else 0.0
    if w_max <= 0:
        raise UndefinedMetricError("all weights are zero; normalized error undefined")
    rep = clustering.representative_weights
    mae = np.abs(w - rep[clustering.labels]).mean(axis=1)
    nmae_node = mae / w_max
    nmae_cluster = np.array([float(nmae_node[m].mean()) for m in clustering.clusters])
    deltas = _delta_per_cluster(w, clustering.clusters, rep)
    finite = deltas[np.isfinite(deltas)]
    return ClusterErrorReport(
        nmae_per_node=nmae_node,
        nmae_per_cluster=nmae_cluster,
        nmae_mean=float(nmae_node.mean()),
        nmae_max=float(nmae_node.max()),
        delta_per_cluster=deltas,
        delta_max=float(finite.max()) if finite.size else float("inf"),
        w_max=w_max,
    )


def clustering_violations(inst: MatchingInstance, clustering: Clustering) -> list[str]:
    """Structural invariant check; returns violation messages."""
    out = []
    n = inst.n_patients
    seen = np.zeros(n, dtype=int)
    for members in clustering.clusters:
        for i in members:
            if not 0 <= i < n:
                out.append(f"member index {i} out of range")
            else:
                seen[i] += 1
    if np.any(seen != 1):
        out.append("clusters do not partition the patient set")
    sizes = clustering.sizes()
    if np.any(sizes < clustering.min_size):
        out.append(f"cluster below min size {clustering.min_size}")
    if clustering.min_size > 0 and clustering.n_clusters > n // clustering.min_size:
        out.append("more clusters than floor(n/min_size)")
    rep = representative_weights(inst, clustering.clusters)
    scale = np.maximum(np.abs(rep), 1.0)
    if np.any(np.abs(rep - clustering.representative_weights) > REPRESENTATIVE_TOL * scale):
        out.append("representative weights are not member means")
    return out


def clustering_to_dict(clustering: Clustering) -> dict:
    def enc(x: float):
        return None if not np.isfinite(x) else float(x)

    return {
        "method": clustering.method,
        "min_size": int(clustering.min_size),
        "patient_ids": list(clustering.patient_ids),
        "clusters": [[int(i) for i in c] for c in clustering.clusters],
        "representative_weights": clustering.representative_weights.tolist(),
        "delta_per_cluster": [enc(d) for d in clustering.delta_per_cluster],
        "delta_max": enc(clustering.delta_max),
    }


def clustering_from_dict(data: dict) -> Clustering:
    def dec(x):
        return float("inf") if x is None else float(x)

    try:
        return Clustering(
            method=str(data["method"]),
            min_size=int(data["min_size"]),
            patient_ids=[str(s) for s in data["patient_ids"]],
            clusters=[[int(i) for i in c] for c in data["clusters"]],
            representative_weights=np.array(data["representative_weights"], dtype=np.float64),
            delta_per_cluster=np.array([dec(d) for d in data["delta_per_cluster"]]),
            delta_max=dec(data["delta_max"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed clustering document: {exc}") from exc


def save_clustering(clustering: Clustering, path: str | Path) -> None:
    Path(path).write_text(json.dumps(clustering_to_dict(clustering), sort_keys=True))


def load_clustering(path: str | Path) -> Clustering:
    with open(path) as fh:
        return clustering_from_dict(json.load(fh))
