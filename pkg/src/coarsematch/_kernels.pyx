# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled online dispatch kernel.

Transliteration of coarsematch._dispatch_py.run_dispatch; outputs must be
bit-identical to the pure-Python twin. The random-number protocol and state
semantics are documented there.
"""

import numpy as np


def run_dispatch(
    int[:] arr_v,
    double[:, ::1] uniforms,
    long long[:] route_indptr,
    int[:] route_node,
    double[:] route_cum,
    double[:] route_prob,
    long long[:] memb_indptr,
    int[:] memb_idx,
    int[:] cluster_of,
    unsigned char[:, ::1] compat,
    double[:, ::1] w,
    double[:, ::1] p,
    int dispatch_mode,
    int intra_mode,
    unsigned char[:, ::1] success_table,
    int use_table,
    int[:] matched_out,
    unsigned char[:] success_out,
    unsigned char[:] had_candidate_out,
):
    cdef Py_ssize_t n_arr = arr_v.shape[0]
    cdef Py_ssize_t n_u = compat.shape[0]
    cdef Py_ssize_t n_v = compat.shape[1]
    cdef Py_ssize_t n_nodes = memb_indptr.shape[0] - 1

    free_arr = np.ones(n_u, dtype=np.uint8)
    count_arr = np.zeros((n_nodes, n_v), dtype=np.int32)
    free_total_arr = np.zeros(n_v, dtype=np.int32)
    cdef unsigned char[:] free = free_arr
    cdef int[:, ::1] count = count_arr
    cdef int[:] free_total = free_total_arr

    cdef Py_ssize_t i, c, t, u, v, v2, k, start, end, lo, hi
    cdef Py_ssize_t node, chosen, idx, seen, n_elig, c0
    cdef int had, s
    cdef double u0, u1, u2, total, target, acc, best_w

    for c in range(n_nodes):
        for t in range(memb_indptr[c], memb_indptr[c + 1]):
            u = memb_idx[t]
            for v2 in range(n_v):
                if compat[u, v2]:
                    count[c, v2] += 1
                    free_total[v2] += 1

    for i in range(n_arr):
        v = arr_v[i]
        had = 1 if free_total[v] > 0 else 0
        had_candidate_out[i] = <unsigned char> had
        u0 = uniforms[i, 0]
        u1 = uniforms[i, 1]
        u2 = uniforms[i, 2]

        start = route_indptr[v]
        end = route_indptr[v + 1]
        node = -1
        k = start
        while k < end and route_cum[k] <= u0:
            k += 1
        if k < end:
            node = route_node[k]

        chosen = -1
        if node >= 0:
            chosen = _pick_member(
                node, v, u2, intra_mode, memb_indptr, memb_idx, free, compat, w
            )

        if chosen < 0 and dispatch_mode == 1 and had:
            total = 0.0
            for k in range(start, end):
                if count[route_node[k], v] > 0:
                    total += route_prob[k]
            node = -1
            if total > 0.0:
                target = u1 * total
                acc = 0.0
                for k in range(start, end):
                    c = route_node[k]
                    if count[c, v] > 0:
                        acc += route_prob[k]
                        node = c
                        if acc > target:
                            break
            else:
                n_elig = 0
                for c in range(n_nodes):
                    if count[c, v] > 0:
                        n_elig += 1
                idx = <Py_ssize_t> (u1 * n_elig)
                if idx >= n_elig:
                    idx = n_elig - 1
                seen = 0
                for c in range(n_nodes):
                    if count[c, v] > 0:
                        if seen == idx:
                            node = c
                            break
                        seen += 1
            chosen = _pick_member(
                node, v, u2, intra_mode, memb_indptr, memb_idx, free, compat, w
            )

        if chosen >= 0:
            if use_table:
                s = success_table[chosen, i]
            else:
                s = 1 if uniforms[i, 3] < p[chosen, v] else 0
            matched_out[i] = <int> chosen
            success_out[i] = <unsigned char> s
            free[chosen] = 0
            c0 = cluster_of[chosen]
            for v2 in range(n_v):
                if compat[chosen, v2]:
                    count[c0, v2] -= 1
                    free_total[v2] -= 1
        else:
            matched_out[i] = -1
            success_out[i] = 0


cdef inline Py_ssize_t _pick_member(
    Py_ssize_t node,
    Py_ssize_t v,
    double draw,
    int intra_mode,
    long long[:] memb_indptr,
    int[:] memb_idx,
    unsigned char[:] free,
    unsigned char[:, ::1] compat,
    double[:, ::1] w,
):
    cdef Py_ssize_t lo = memb_indptr[node]
    cdef Py_ssize_t hi = memb_indptr[node + 1]
    cdef Py_ssize_t t, u, k, idx, seen, best
    cdef double best_w
    if intra_mode == 0:
        k = 0
        for t in range(lo, hi):
            u = memb_idx[t]
            if free[u] and compat[u, v]:
                k += 1
        if k == 0:
            return -1
        idx = <Py_ssize_t> (draw * k)
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
