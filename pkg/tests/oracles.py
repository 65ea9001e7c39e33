"""Independent brute-force references shared by the unit and acceptance tests.

Nothing here imports the code under test; each function is a direct,
slow restatement of the definition it checks.
"""

import math
from fractions import Fraction

import numpy as np


def naive_psi(array, beam, az, el, f):
    """Element-by-element array factor with explicit DFT weights."""
    kx, kz = divmod(beam, array.n_rows)
    qx = (kx - array.n_cols // 2) / array.n_cols
    qz = (kz - array.n_rows // 2) / array.n_rows
    total = 0j
    for nx in range(array.n_cols):
        for nz in range(array.n_rows):
            steer = 2 * math.pi * f / array.carrier_frequency * array.element_spacing * (
                nx * math.cos(el) * math.cos(az) + nz * math.sin(el))
            weight = 2 * math.pi * (qx * nx + qz * nz)
            total += complex(math.cos(steer - weight), math.sin(steer - weight))
    return total


def _dft_weights(array):
    """Explicit (beams, elements) DFT weight matrix, element order nx-major."""
    nx, nz = np.meshgrid(np.arange(array.n_cols), np.arange(array.n_rows), indexing="ij")
    nx, nz = nx.ravel(), nz.ravel()
    rows = []
    for beam in range(array.n_cols * array.n_rows):
        kx, kz = divmod(beam, array.n_rows)
        qx = (kx - array.n_cols // 2) / array.n_cols
        qz = (kz - array.n_rows // 2) / array.n_rows
        rows.append(np.exp(2j * np.pi * (qx * nx + qz * nz)))
    return np.array(rows), nx, nz


def naive_ctf(mpcs, array, freqs):
    """Triple loop over path, beam row and frequency.

    The array factor of every beam is the plain element sum
    ``conj(w_beam) . a(az, el, f)``; the delay phase is reduced exactly.
    """
    W, nx, nz = _dft_weights(array)
    nb = array.n_beams_h + array.n_beams_v
    psi = []  # psi[p][k][beam]
    rot = []  # rot[p][k]
    for c in mpcs:
        ux = math.cos(c.elevation) * math.cos(c.azimuth)
        uz = math.sin(c.elevation)
        per_f, per_rot = [], []
        for f in freqs:
            a = np.exp(2j * np.pi * f / array.carrier_frequency * array.element_spacing * (nx * ux + nz * uz))
            per_f.append((W.conj() @ a).tolist())
            cycles = float((Fraction(float(f)) * Fraction(c.delay)) % 1)
            per_rot.append(complex(math.cos(2 * math.pi * cycles), -math.sin(2 * math.pi * cycles)))
        psi.append(per_f)
        rot.append(per_rot)
    amps = [[complex(v) for v in c.amplitude_per_layer] for c in mpcs]
    out = [[0j] * len(freqs) for _ in range(array.ue_layers * nb)]
    for m in range(array.ue_layers):
        for row in range(nb):
            beam = row if row < array.n_beams_h else row - array.n_beams_h
            line = out[m * nb + row]
            for k in range(len(freqs)):
                acc = 0j
                for p in range(len(mpcs)):
                    acc += psi[p][k][beam] * amps[p][m] * rot[p][k]
                line[k] = acc
    return np.array(out)


def dense_forward(weights, x):
    """Dense/ReLU stack written out as plain matrix arithmetic."""
    h = np.asarray(x, dtype=float)
    for k, (W, b) in enumerate(weights):
        h = h.dot(W) + b
        if k < len(weights) - 1:
            h = np.where(h > 0, h, 0.0)
    return h


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central differences of ``loss_fn()`` w.r.t. each entry of each array in ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-7):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def connected_components(X, eps):
    """Union-find over every pair within ``eps``; returns a set of frozensets."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if math.dist(X[i], X[j]) <= eps:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def partition(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def ward_delta(X, a, b):
    """Ward linkage between member lists ``a`` and ``b`` from centroids."""
    ma = X[list(a)].mean(axis=0)
    mb = X[list(b)].mean(axis=0)
    na, nb = len(a), len(b)
    return na * nb / (na + nb) * float(np.sum((ma - mb) ** 2))


def naive_ward(X):
    """Greedy Ward agglomeration recomputing every pair each round.

    Clusters keep the slot of their lower-indexed parent; ties go to the
    lowest (i, j) slot pair. Returns ``[(members_a, members_b, delta), ...]``.
    """
    X = np.asarray(X, dtype=float)
    slots = {i: [i] for i in range(len(X))}
    history = []
    while len(slots) > 1:
        keys = sorted(slots)
        best = None
        for ii, i in enumerate(keys):
            for j in keys[ii + 1:]:
                d = ward_delta(X, slots[i], slots[j])
                if best is None or d < best[0]:
                    best = (d, i, j)
        d, i, j = best
        history.append((frozenset(slots[i]), frozenset(slots[j]), d))
        slots[i] = slots[i] + slots.pop(j)
    return history
