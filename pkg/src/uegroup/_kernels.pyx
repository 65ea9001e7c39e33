# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Must stay numerically in step with ``_pykernels``."""

import numpy as np

from libc.math cimport sqrt, INFINITY


def adam_update(double[::1] param, const double[::1] grad, double[::1] m,
                double[::1] v, double lr, double beta1, double beta2,
                double eps, double bias1, double bias2):
    """Fused in-place Adam step over flat float64 buffers."""
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, mi, vi
    cdef double c1 = 1.0 - beta1
    cdef double c2 = 1.0 - beta2
    cdef double step = lr / bias1
    cdef double inv2 = 1.0 / bias2
    for i in range(n):
        g = grad[i]
        mi = beta1 * m[i] + c1 * g
        vi = beta2 * v[i] + c2 * (g * g)
        m[i] = mi
        v[i] = vi
        param[i] = param[i] - step * mi / (sqrt(vi * inv2) + eps)


def dbscan_labels(const double[:, ::1] X, double eps, Py_ssize_t min_pts):
    """Raw DBSCAN labels (-1 noise), clusters numbered in discovery order."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k, head, tail, cur, cluster = 0
    cdef double acc, diff, eps2 = eps * eps
    labels_arr = np.full(n, -1, dtype=np.int64)
    counts_arr = np.zeros(n, dtype=np.int64)
    queue_arr = np.empty(n, dtype=np.int64)
    visited_arr = np.zeros(n, dtype=np.uint8)
    cdef long long[::1] labels = labels_arr
    cdef long long[::1] counts = counts_arr
    cdef long long[::1] queue = queue_arr
    cdef unsigned char[::1] visited = visited_arr

    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                acc = acc + diff * diff
            if acc <= eps2:
                counts[i] += 1

    for i in range(n):
        if visited[i] or counts[i] < min_pts:
            continue
        visited[i] = 1
        labels[i] = cluster
        head = 0
        tail = 0
        queue[tail] = i
        tail += 1
        while head < tail:
            cur = queue[head]
            head += 1
            if counts[cur] < min_pts:
                continue
            for j in range(n):
                if labels[j] >= 0 and visited[j]:
                    continue
                acc = 0.0
                for k in range(d):
                    diff = X[cur, k] - X[j, k]
                    acc = acc + diff * diff
                if acc > eps2:
                    continue
                if labels[j] < 0:
                    labels[j] = cluster
                if not visited[j] and counts[j] >= min_pts:
                    visited[j] = 1
                    queue[tail] = j
                    tail += 1
        cluster += 1
    return labels_arr


def ward_linkage(const double[:, ::1] X):
    """Full Ward agglomeration with Lance-Williams updates.

    Returns ``(pairs, deltas, sizes)``; merge ``k`` joins slots
    ``pairs[k, 0] < pairs[k, 1]`` into slot ``pairs[k, 0]``.
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k, step, bi = 0, bj = 0
    cdef double acc, diff, best, ni, nj, nk
    if n < 2:
        return (np.empty((0, 2), dtype=np.int64), np.empty(0), np.empty(0, dtype=np.int64))
    D_arr = np.zeros((n, n))
    size_arr = np.ones(n, dtype=np.int64)
    active_arr = np.ones(n, dtype=np.uint8)
    pairs_arr = np.empty((n - 1, 2), dtype=np.int64)
    deltas_arr = np.empty(n - 1)
    sizes_out = np.empty(n - 1, dtype=np.int64)
    cdef double[:, ::1] D = D_arr
    cdef long long[::1] size = size_arr
    cdef unsigned char[::1] active = active_arr
    cdef long long[:, ::1] pairs = pairs_arr
    cdef double[::1] deltas = deltas_arr
    cdef long long[::1] sizes_o = sizes_out

    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                acc = acc + diff * diff
            D[i, j] = 0.5 * acc
            D[j, i] = D[i, j]

    for step in range(n - 1):
        best = INFINITY
        for i in range(n):
            if not active[i]:
                continue
            for j in range(i + 1, n):
                if active[j] and D[i, j] < best:
                    best = D[i, j]
                    bi = i
                    bj = j
        ni = <double>size[bi]
        nj = <double>size[bj]
        for k in range(n):
            if not active[k] or k == bi or k == bj:
                continue
            nk = <double>size[k]
            D[bi, k] = ((ni + nk) * D[bi, k] + (nj + nk) * D[bj, k] - nk * best) / (ni + nj + nk)
            D[k, bi] = D[bi, k]
        active[bj] = 0
        size[bi] = size[bi] + size[bj]
        pairs[step, 0] = bi
        pairs[step, 1] = bj
        deltas[step] = best
        sizes_o[step] = size[bi]
    return pairs_arr, deltas_arr, sizes_out
