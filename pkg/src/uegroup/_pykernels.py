"""Pure-Python/numpy twins of the compiled kernels in ``_kernels.pyx``."""

from collections import deque

import numpy as np


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bias1, bias2):
    """Fused in-place Adam step over flat float64 buffers."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    denom = v * (1.0 / bias2)
    np.sqrt(denom, out=denom)
    denom += eps
    update = (lr / bias1) * m
    update /= denom
    param -= update


def dbscan_labels(X, eps, min_pts):
    """Raw DBSCAN labels (-1 noise), clusters numbered in discovery order."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    diff = X[:, None, :] - X[None, :, :]
    adjacency = np.einsum("ijk,ijk->ij", diff, diff) <= eps * eps
    neighbors = [np.flatnonzero(row) for row in adjacency]
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        visited[i] = True
        labels[i] = cluster
        queue = deque([i])
        while queue:
            cur = queue.popleft()
            if not core[cur]:
                continue
            for j in neighbors[cur]:
                if labels[j] < 0:
                    labels[j] = cluster
                if not visited[j] and core[j]:
                    visited[j] = True
                    queue.append(j)
        cluster += 1
    return labels


def ward_linkage(X):
    """Full Ward agglomeration with Lance-Williams updates.

    Returns ``(pairs, deltas, sizes)``; merge ``k`` joins slots
    ``pairs[k, 0] < pairs[k, 1]`` into slot ``pairs[k, 0]``.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        return np.empty((0, 2), dtype=np.int64), np.empty(0), np.empty(0, dtype=np.int64)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            diff = X[i] - X[j]
            D[i, j] = D[j, i] = 0.5 * float(np.sum(diff * diff))
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    pairs = np.empty((n - 1, 2), dtype=np.int64)
    deltas = np.empty(n - 1)
    sizes = np.empty(n - 1, dtype=np.int64)
    for step in range(n - 1):
        valid = upper & active[:, None] & active[None, :]
        flat = int(np.argmin(np.where(valid, D, np.inf)))
        bi, bj = divmod(flat, n)
        best = D[bi, bj]
        ni, nj = size[bi], size[bj]
        others = np.flatnonzero(active)
        others = others[(others != bi) & (others != bj)]
        nk = size[others]
        D[bi, others] = ((ni + nk) * D[bi, others] + (nj + nk) * D[bj, others] - nk * best) / (ni + nj + nk)
        D[others, bi] = D[bi, others]
        active[bj] = False
        size[bi] += size[bj]
        pairs[step] = (bi, bj)
        deltas[step] = best
        sizes[step] = int(size[bi])
    return pairs, deltas, sizes
