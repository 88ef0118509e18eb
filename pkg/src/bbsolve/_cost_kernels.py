"""Packed single-candidate cost kernels shared by the baselines.

Each problem kind is packed into flat integer/float parameter arrays so a
compiled search loop can evaluate candidates without Python callbacks.
Layouts:

* knapsack:       ints = [n, W, v_1..v_n, w_1..w_n]
* deconfliction:  ints = [N, K, CM flattened row-major (m*m)]
* tsp:            ints = [n_points, m, 0!, 1!, .., (n-2)!], floats = xy pairs
"""

import numpy as np

from ._accel import maybe_njit

KIND_KNAPSACK = 0
KIND_DECONFLICTION = 1
KIND_TSP = 2


@maybe_njit(cache=True)
def eval_one(kind, ints, floats, bits):
    if kind == KIND_KNAPSACK:
        n = ints[0]
        cap = ints[1]
        value = 0
        weight = 0
        total = 0
        for i in range(n):
            total += ints[2 + i]
            if bits[i]:
                value += ints[2 + i]
                weight += ints[2 + n + i]
        if weight <= cap:
            return float(value)
        return float(value - total - 1)
    if kind == KIND_DECONFLICTION:
        n_air = ints[0]
        k_man = ints[1]
        m = n_air * k_man
        h1 = 0
        for i in range(n_air):
            chosen = 0
            for j in range(k_man):
                chosen += bits[i * k_man + j]
            if chosen != 1:
                h1 = 1
                break
        h2 = 0
        for a in range(m):
            if bits[a]:
                row = 2 + a * m
                for b in range(m):
                    if bits[b]:
                        h2 += ints[row + b]
        h3 = 0
        for i in range(n_air):
            h3 += bits[i * k_man]
        return float((m + 1) * h1 + (n_air + 1) * h2 - h3)
    # tsp: big-endian bits -> Lehmer index -> tour length
    n_pts = ints[0]
    m = ints[1]
    k = 0
    for i in range(m):
        k = (k << 1) | bits[i]
    n_perm = n_pts - 1
    k %= ints[2 + n_perm - 1] * n_perm  # (n-2)! * (n-1) == (n-1)!
    unused = np.empty(n_perm, dtype=np.int64)
    for i in range(n_perm):
        unused[i] = i + 1
    size = n_perm
    prev_x = floats[0]
    prev_y = floats[1]
    length = 0.0
    for i in range(n_perm):
        f = ints[2 + n_perm - 1 - i]
        d = k // f
        k -= d * f
        pick = unused[d]
        for u in range(d, size - 1):
            unused[u] = unused[u + 1]
        size -= 1
        x = floats[2 * pick]
        y = floats[2 * pick + 1]
        dx = x - prev_x
        dy = y - prev_y
        length += np.sqrt(dx * dx + dy * dy)
        prev_x = x
        prev_y = y
    dx = floats[0] - prev_x
    dy = floats[1] - prev_y
    return length + np.sqrt(dx * dx + dy * dy)


@maybe_njit(cache=True)
def eval_batch_kernel(kind, ints, floats, bits_mat, out):
    for r in range(bits_mat.shape[0]):
        out[r] = eval_one(kind, ints, floats, bits_mat[r])


def knapsack_batch(values, weights, capacity, bits_mat):
    v = bits_mat.astype(np.int64) @ values
    w = bits_mat.astype(np.int64) @ weights
    total = int(values.sum())
    return np.where(w <= capacity, v, v - total - 1).astype(np.float64)


def deconfliction_batch(n_air, k_man, cm2, bits_mat):
    b = bits_mat.astype(np.int64)
    per_aircraft = b.reshape(b.shape[0], n_air, k_man).sum(axis=2)
    h1 = (per_aircraft != 1).any(axis=1).astype(np.int64)
    h2 = np.einsum("ri,ij,rj->r", b, cm2, b)
    h3 = b[:, ::k_man].sum(axis=1)
    m = n_air * k_man
    return ((m + 1) * h1 + (n_air + 1) * h2 - h3).astype(np.float64)
