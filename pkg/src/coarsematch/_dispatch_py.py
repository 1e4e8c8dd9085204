"""Pure-Python online dispatch kernel.

Reference implementation of the per-arrival loop; `coarsematch._kernels` is a
compiled transliteration and must produce bit-identical outputs. Keep the two
in lockstep: any change here must be mirrored there.

Random-number protocol: the caller pre-draws `uniforms` with shape
(n_arrivals, 4). Slot 0 routes the arrival through the cumulative flow
intervals (ascending node order, leftover mass = no route). Slot 1 drives the
resample redirect, slot 2 the intra-node pick, slot 3 the match success draw.
All four slots are reserved every arrival no matter which are consumed, so
runs with different dispatch/intra settings see identical streams.

State per (node, donor type) is the count of free compatible members, kept
exactly; `had_candidate` records whether any free compatible patient existed
anywhere at arrival time.
"""

from __future__ import annotations

DISPATCH_DISCARD = 0
DISPATCH_RESAMPLE = 1
INTRA_UNIFORM = 0
INTRA_GREEDY = 1


def run_dispatch(
    arr_v,  # (n_arr,) int32 donor type index per arrival
    uniforms,  # (n_arr, 4) float64
    route_indptr,  # (n_v+1,) int64 CSR over donor types
    route_node,  # int32 node indices with positive flow, ascending
    route_cum,  # float64 cumulative flow/rate within each donor type
    route_prob,  # float64 per-entry flow/rate
    memb_indptr,  # (n_nodes+1,) int64 CSR of node membership
    memb_idx,  # int32 patient indices, ascending within node
    cluster_of,  # (n_u,) int32 node index of each patient
    compat,  # (n_u, n_v) uint8
    w,  # (n_u, n_v) float64 true weights
    p,  # (n_u, n_v) float64 success probabilities
    dispatch_mode: int,
    intra_mode: int,
    success_table,  # (n_u, n_arr) uint8, or (0, 0) when unused
    use_table: int,
    matched_out,  # (n_arr,) int32, -1 = unmatched
    success_out,  # (n_arr,) uint8
    had_candidate_out,  # (n_arr,) uint8
):
    n_arr = len(arr_v)
    n_u, n_v = compat.shape
    n_nodes = len(memb_indptr) - 1

    free = [1] * n_u
    # exact count of free compatible members per (node, donor type)
    count = [[0] * n_v for _ in range(n_nodes)]
    free_total = [0] * n_v
    for c in range(n_nodes):
        row = count[c]
        for t in range(memb_indptr[c], memb_indptr[c + 1]):
            u = memb_idx[t]
            for v2 in range(n_v):
                if compat[u, v2]:
                    row[v2] += 1
                    free_total[v2] += 1

    def pick_member(node, v, draw):
        lo, hi = memb_indptr[node], memb_indptr[node + 1]
        if intra_mode == INTRA_UNIFORM:
            k = 0
            for t in range(lo, hi):
                u = memb_idx[t]
                if free[u] and compat[u, v]:
                    k += 1
            if k == 0:
                return -1
            idx = int(draw * k)
            if idx >= k:
                idx = k - 1
            seen = 0
            for t in range(lo, hi):
                u = memb_idx[t]
                if free[u] and compat[u, v]:
                    if seen == idx:
                        return u
                    seen += 1
            return -1
        best = -1
        best_w = -1.0
        for t in range(lo, hi):
            u = memb_idx[t]
            if free[u] and compat[u, v] and w[u, v] > best_w:
                best = u
                best_w = w[u, v]
        return best

    for i in range(n_arr):
        v = int(arr_v[i])
        had = free_total[v] > 0
        had_candidate_out[i] = 1 if had else 0
        u0 = uniforms[i, 0]
        u1 = uniforms[i, 1]
        u2 = uniforms[i, 2]

        start, end = route_indptr[v], route_indptr[v + 1]
        node = -1
        k = start
        while k < end and route_cum[k] <= u0:
            k += 1
        if k < end:
            node = route_node[k]

        chosen = -1
        if node >= 0:
            chosen = pick_member(node, v, u2)

        if chosen < 0 and dispatch_mode == DISPATCH_RESAMPLE and had:
            # redirect: renormalize flow mass over nodes that still have a
            # free compatible member; zero mass falls back to a uniform pick
            total = 0.0
            for k in range(start, end):
                if count[route_node[k]][v] > 0:
                    total += route_prob[k]
            node = -1
            if total > 0.0:
                target = u1 * total
                acc = 0.0
                for k in range(start, end):
                    c = route_node[k]
                    if count[c][v] > 0:
                        acc += route_prob[k]
                        node = c
                        if acc > target:
                            break
            else:
                n_elig = 0
                for c in range(n_nodes):
                    if count[c][v] > 0:
                        n_elig += 1
                idx = int(u1 * n_elig)
                if idx >= n_elig:
                    idx = n_elig - 1
                seen = 0
                for c in range(n_nodes):
                    if count[c][v] > 0:
                        if seen == idx:
                            node = c
                            break
                        seen += 1
            chosen = pick_member(node, v, u2)

        if chosen >= 0:
            if use_table:
                s = int(success_table[chosen, i])
            else:
                s = 1 if uniforms[i, 3] < p[chosen, v] else 0
            matched_out[i] = chosen
            success_out[i] = s
            free[chosen] = 0
            c0 = int(cluster_of[chosen])
            row = count[c0]
            for v2 in range(n_v):
                if compat[chosen, v2]:
                    row[v2] -= 1
                    free_total[v2] -= 1
        else:
            matched_out[i] = -1
            success_out[i] = 0
