"""Matrix permanents and permanent-based outcome probabilities.

These are the route to output statistics that does not touch the Fock-space
evolution code: the probability of measuring occupation s after sending
occupation t through mode unitary U is |Perm(U[s-rows, t-cols])|^2 scaled by
the occupation factorials. Used as an independent check on the evolved
state and as the engine of the sequential sampler.
"""

from math import factorial

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit

_FALLBACK_LIMIT = 18


@maybe_njit(cache=True)
def _ryser_complex(a):
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    total = 0.0 + 0.0j
    row_sum = np.zeros(n, dtype=np.complex128)
    sgn = 1.0
    for k in range(1, 1 << n):
        # gray code: bit j of the subset flips at step k
        j = 0
        kk = k
        while not kk & 1:
            kk >>= 1
            j += 1
        if (k ^ (k >> 1)) >> j & 1:
            for i in range(n):
                row_sum[i] += a[i, j]
        else:
            for i in range(n):
                row_sum[i] -= a[i, j]
        sgn = -sgn
        prod = 1.0 + 0.0j
        for i in range(n):
            prod *= row_sum[i]
        total += sgn * prod
    if n & 1:
        return -total
    return total


def _perm_vectorized(a: np.ndarray) -> complex:
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    if n > _FALLBACK_LIMIT:
        raise ValueError(f"permanent fallback limited to n <= {_FALLBACK_LIMIT}")
    k = np.arange(1, 1 << n, dtype=np.int64)
    bits = (k[:, None] >> np.arange(n)) & 1
    sums = bits @ a.T.astype(np.complex128)
    prods = np.prod(sums, axis=1)
    signs = 1 - 2 * (bits.sum(axis=1) & 1)
    total = np.sum(signs * prods)
    return complex(total if n % 2 == 0 else -total)


def permanent(mat) -> complex:
    """Permanent of a square matrix (Ryser, O(n 2^n))."""
    a = np.asarray(mat)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need a square matrix, got shape {a.shape}")
    if NUMBA_ENABLED:
        return complex(_ryser_complex(np.ascontiguousarray(a, dtype=np.complex128)))
    return _perm_vectorized(a)


def pattern_probability(u: np.ndarray, input_pattern, output_pattern) -> float:
    """P(output | input) through mode unitary ``u`` via a permanent."""
    inp = np.asarray(input_pattern, dtype=np.int64)
    out = np.asarray(output_pattern, dtype=np.int64)
    rows = np.repeat(np.arange(u.shape[0]), out)
    cols = np.repeat(np.arange(u.shape[0]), inp)
    if rows.size != cols.size:
        raise ValueError("photon number mismatch between input and output")
    sub = u[np.ix_(rows, cols)]
    norm = 1.0
    for c in inp:
        norm *= factorial(int(c))
    for c in out:
        norm *= factorial(int(c))
    return float(abs(permanent(sub)) ** 2 / norm)


def exact_distribution(u: np.ndarray, input_pattern) -> dict[tuple[int, ...], float]:
    """Full outcome distribution computed outcome-by-outcome from permanents."""
    from .fock import get_basis  # local import to avoid a cycle

    inp = np.asarray(input_pattern, dtype=np.int64)
    basis = get_basis(u.shape[0], int(inp.sum()))
    dist = {}
    for row in basis.patterns:
        p = pattern_probability(u, inp, row)
        if p > 0.0:
            dist[tuple(int(v) for v in row)] = p
    return dist
