"""Compiled inner loops for the Grow-When-Required network.

State layout shared by every kernel:

    W    (cap, D) float64   neuron weights, rows [0, n) live, ordered by id
    H    (cap,)   float64   habituation counters
    ids  (cap,)   int64     stable neuron ids, strictly increasing over [0, n)
    A    (cap, cap) int64   symmetric edge ages, -1 where no edge

Keeping live rows sorted by id means "lowest index" is "lowest id", which is
the tie-break rule for every argmin.
"""

import numpy as np
from numba import njit

# Layout of the packed parameter vector passed to the kernels.
P_INSERTION, P_FIRING, P_EPS_B, P_EPS_I, P_TAU_B, P_TAU_I, P_KAPPA, P_AMAX = range(8)


@njit(cache=True)
def masked_distances(W, n, x, m):
    out = np.empty(n)
    D = W.shape[1]
    for i in range(n):
        acc = 0.0
        for j in range(D):
            if m[j]:
                diff = x[j] - W[i, j]
                acc += diff * diff
        out[i] = np.sqrt(acc)
    return out


@njit(cache=True)
def two_nearest(dist, n):
    b = 0
    for i in range(1, n):
        if dist[i] < dist[b]:
            b = i
    s = 1 if b == 0 else 0
    for i in range(n):
        if i != b and dist[i] < dist[s]:
            s = i
    return b, s


@njit(cache=True)
def habituate(h, tau, kappa):
    h = h + tau * kappa * (1.0 - h) - tau
    if h < 0.0:
        return 0.0
    if h > 1.0:
        return 1.0
    return h


@njit(cache=True)
def _remove_neuron(W, H, ids, A, n, k):
    for i in range(k, n - 1):
        W[i, :] = W[i + 1, :]
        H[i] = H[i + 1]
        ids[i] = ids[i + 1]
    for i in range(k, n - 1):
        for j in range(n):
            A[i, j] = A[i + 1, j]
    for i in range(n - 1):
        for j in range(k, n - 1):
            A[i, j] = A[i, j + 1]
    for j in range(n):
        A[n - 1, j] = -1
        A[j, n - 1] = -1
    return n - 1


@njit(cache=True)
def step(W, H, ids, A, n, next_id, x, m, p):
    """One adaptation step.

    Returns (n, next_id, inserted, bmu_id, activity, bmu_h_before).
    Caller guarantees n < capacity.
    """
    dist = masked_distances(W, n, x, m)
    b, s = two_nearest(dist, n)
    act = np.exp(-dist[b])
    hb = H[b]
    bmu_id = ids[b]
    D = W.shape[1]
    a_max = p[P_AMAX]

    for j in range(n):
        if A[b, j] >= 0:
            A[b, j] += 1
            A[j, b] = A[b, j]
    A[b, s] = 0
    A[s, b] = 0

    inserted = act < p[P_INSERTION] and hb < p[P_FIRING]
    if inserted:
        r = n
        for j in range(D):
            if m[j]:
                W[r, j] = 0.5 * (W[b, j] + x[j])
            else:
                W[r, j] = W[b, j]
        H[r] = 1.0
        ids[r] = next_id
        next_id += 1
        for j in range(n + 1):
            A[r, j] = -1
            A[j, r] = -1
        A[r, b] = 0
        A[b, r] = 0
        A[r, s] = 0
        A[s, r] = 0
        A[b, s] = -1
        A[s, b] = -1
        n += 1
    else:
        rate = p[P_EPS_B] * hb
        for j in range(D):
            if m[j]:
                W[b, j] += rate * (x[j] - W[b, j])
        for i in range(n):
            if i != b and A[b, i] >= 0:
                rate = p[P_EPS_I] * H[i]
                for j in range(D):
                    if m[j]:
                        W[i, j] += rate * (x[j] - W[i, j])
                H[i] = habituate(H[i], p[P_TAU_I], p[P_KAPPA])
        H[b] = habituate(hb, p[P_TAU_B], p[P_KAPPA])

    # Only edges at the bmu aged, so only its neighbourhood can need pruning.
    orphan_count = 0
    orphans = np.empty(n, dtype=np.int64)
    for j in range(n):
        if A[b, j] > a_max:
            A[b, j] = -1
            A[j, b] = -1
            deg = 0
            for k in range(n):
                if A[j, k] >= 0:
                    deg += 1
            if deg == 0:
                orphans[orphan_count] = j
                orphan_count += 1
    # Descending order keeps the remaining orphan indices valid.
    for t in range(orphan_count - 1, -1, -1):
        if n <= 2:
            break
        n = _remove_neuron(W, H, ids, A, n, orphans[t])
    return n, next_id, inserted, bmu_id, act, hb


@njit(cache=True)
def run_epoch(W, H, ids, A, n, next_id, X, M, order, start, p):
    """Present X[order[start:]] in turn; stop early when capacity is reached.

    Returns (n, next_id, next_position, insertions).
    """
    cap = W.shape[0]
    insertions = 0
    pos = start
    while pos < order.shape[0]:
        if n >= cap:
            break
        k = order[pos]
        n, next_id, ins, _, _, _ = step(W, H, ids, A, n, next_id, X[k], M[k], p)
        if ins:
            insertions += 1
        pos += 1
    return n, next_id, pos, insertions


@njit(cache=True)
def bmu_batch(W, n, X, M):
    """Best and second-best indices plus bmu distance for every row of X."""
    rows = X.shape[0]
    best = np.empty(rows, dtype=np.int64)
    second = np.empty(rows, dtype=np.int64)
    dist = np.empty(rows)
    for r in range(rows):
        d = masked_distances(W, n, X[r], M[r])
        b, s = two_nearest(d, n)
        best[r] = b
        second[r] = s
        dist[r] = d[b]
    return best, second, dist
