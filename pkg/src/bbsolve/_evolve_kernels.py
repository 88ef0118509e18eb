"""Kernels for applying two-mode beamsplitters to Fock-space state vectors.

A beamsplitter on modes (i, j) only mixes basis states that share the same
occupation outside the pair and the same pair total t = n_i + n_j. Basis
indices are therefore precomputed into groups of t + 1 siblings; applying a
coupler is a batch of tiny (t+1) x (t+1) matrix-vector products.

All circuit unitaries are real rotations, so amplitudes stay real float64.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit


@maybe_njit(cache=True)
def _fill_blocks(ct, st, n, choose, sqfact, out):
    """Fill out[t, kp, k] with pair-space beamsplitter matrix elements.

    out[t, kp, k] is the amplitude for |k, t-k> -> |kp, t-kp> under the mode
    rotation a_i -> ct*a_i + st*a_j, a_j -> -st*a_i + ct*a_j.
    """
    ctp = np.empty(n + 1)
    stp = np.empty(n + 1)
    ctp[0] = 1.0
    stp[0] = 1.0
    for q in range(1, n + 1):
        ctp[q] = ctp[q - 1] * ct
        stp[q] = stp[q - 1] * st
    for t in range(n + 1):
        for k in range(t + 1):
            l = t - k
            for kp in range(t + 1):
                lp = t - kp
                qlo = kp - k if kp > k else 0
                qhi = l if l < kp else kp
                acc = 0.0
                for q in range(qlo, qhi + 1):
                    p = kp - q
                    term = (
                        choose[k, p]
                        * choose[l, q]
                        * ctp[p + l - q]
                        * stp[k - p + q]
                    )
                    if q & 1:
                        term = -term
                    acc += term
                out[t, kp, k] = acc * sqfact[kp] * sqfact[lp] / (sqfact[k] * sqfact[l])


@maybe_njit(cache=True)
def _apply_levels_numba(amps, flat_idx, lvl_t, lvl_off, lvl_groups, blocks, scratch):
    for li in range(lvl_t.shape[0]):
        t = lvl_t[li]
        width = t + 1
        base = lvl_off[li]
        for g in range(lvl_groups[li]):
            off = base + g * width
            for kp in range(width):
                acc = 0.0
                for k in range(width):
                    acc += blocks[t, kp, k] * amps[flat_idx[off + k]]
                scratch[kp] = acc
            for kp in range(width):
                amps[flat_idx[off + kp]] = scratch[kp]


class CouplerTable:
    """Precomputed sibling-index groups for one coupler on one Fock basis."""

    __slots__ = ("n", "flat_idx", "lvl_t", "lvl_off", "lvl_groups", "views")

    def __init__(self, basis, i: int, j: int):
        pats = basis.patterns
        ci = pats[:, i].astype(np.int64)
        cj = pats[:, j].astype(np.int64)
        chunks, lvl_t, lvl_groups, views = [], [], [], []
        offset = 0
        lvl_off = [0]
        for t in range(1, basis.n + 1):
            leaders = np.nonzero((cj == 0) & (ci == t))[0]
            if leaders.size == 0:
                continue
            width = t + 1
            work = pats[leaders].astype(np.int64)
            members = np.empty((leaders.size, width), dtype=np.int64)
            for kp in range(width):
                work[:, i] = kp
                work[:, j] = t - kp
                members[:, kp] = basis.rank_rows(work)
            chunks.append(members.ravel())
            lvl_t.append(t)
            lvl_groups.append(leaders.size)
            offset += members.size
            lvl_off.append(offset)
            views.append((t, members))
        self.n = basis.n
        self.flat_idx = (
            np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
        )
        self.lvl_t = np.asarray(lvl_t, dtype=np.int64)
        self.lvl_off = np.asarray(lvl_off, dtype=np.int64)
        self.lvl_groups = np.asarray(lvl_groups, dtype=np.int64)
        self.views = views  # [(t, member index matrix)] for the numpy path


def make_blocks(theta: float, n: int, choose, sqfact) -> np.ndarray:
    blocks = np.zeros((n + 1, n + 1, n + 1))
    _fill_blocks(np.cos(theta), np.sin(theta), n, choose, sqfact, blocks)
    return blocks


def apply_coupler(amps: np.ndarray, table: CouplerTable, theta: float, choose, sqfact):
    """In-place beamsplitter application on a real state vector."""
    blocks = make_blocks(theta, table.n, choose, sqfact)
    if NUMBA_ENABLED:
        scratch = np.empty(table.n + 1)
        _apply_levels_numba(
            amps,
            table.flat_idx,
            table.lvl_t,
            table.lvl_off,
            table.lvl_groups,
            blocks,
            scratch,
        )
    else:
        for t, members in table.views:
            b = blocks[t, : t + 1, : t + 1]
            amps[members] = amps[members] @ b.T
