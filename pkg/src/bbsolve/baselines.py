"""Budget-matched classical comparators.

Both searches count one call per candidate evaluation with no cache,
mirroring how the training ledger counts, and stop at exactly the call
budget R. Randomness is pre-drawn from the caller's Generator into flat
arrays consumed in a fixed order, so the compiled fast path (available when
the cost function carries a packed kernel form) and the generic Python path
walk identical trajectories.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit
from . import _cost_kernels as ck
from .problems import SENSE_MAX, CostFunctionHandle


@dataclass(frozen=True)
class AnnealSchedule:
    """Exponential temperature decay; defaults match the common library ones."""

    t_max: float = 25_000.0
    t_min: float = 2.5

    def __post_init__(self):
        if not self.t_max > self.t_min > 0:
            raise ValueError("need t_max > t_min > 0")


@dataclass(frozen=True)
class BaselineResult:
    best_bits: tuple[int, ...]
    best_cost: float  # native sense
    calls: int
    seed: Optional[int] = None
    budget: Optional[int] = None

    def to_json_dict(self) -> dict:
        return {
            "best_bits": list(self.best_bits),
            "best_cost": self.best_cost,
            "calls": self.calls,
            "unique_evals": None,  # baselines do not memoize
            "budget_bound": self.budget,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# hill climbing with restarts (first-improvement, hard stop at R)
# ---------------------------------------------------------------------------

# Pool consumption: m uniforms per restart string, then one uniform per
# candidate evaluation to pick an untried bit. Each restart costs >= m + 1
# evaluations, so 2R + m draws can never run out.


def _hc_python(eval_fn, m, budget, pool, record_restarts=None):
    cursor = 0
    best_cost = math.inf
    best_bits = None
    calls = 0
    bits = np.zeros(m, dtype=np.uint8)
    untried = np.arange(m)
    while calls < budget:
        for b in range(m):
            bits[b] = 1 if pool[cursor + b] < 0.5 else 0
        cursor += m
        current = eval_fn(bits)
        calls += 1
        if record_restarts is not None:
            record_restarts.append(("start", bits.copy(), current))
        size = m
        untried[:] = np.arange(m)
        while size > 0 and calls < budget:
            pick = int(pool[cursor] * size)
            cursor += 1
            if pick >= size:
                pick = size - 1
            bit = untried[pick]
            bits[bit] ^= 1
            candidate = eval_fn(bits)
            calls += 1
            if candidate < current:
                current = candidate
                size = m
                untried[:] = np.arange(m)
            else:
                bits[bit] ^= 1
                untried[pick] = untried[size - 1]
                untried[size - 1] = bit
                size -= 1
        if size == 0 and record_restarts is not None:
            record_restarts.append(("local_opt", bits.copy(), current))
        if current < best_cost:
            best_cost = current
            best_bits = bits.copy()
    return best_bits, best_cost, calls


@maybe_njit(cache=True)
def _hc_kernel(kind, ints, floats, sign, m, budget, pool, out_bits):
    cursor = 0
    best_cost = np.inf
    calls = 0
    bits = np.zeros(m, dtype=np.uint8)
    untried = np.empty(m, dtype=np.int64)
    while calls < budget:
        for b in range(m):
            bits[b] = 1 if pool[cursor + b] < 0.5 else 0
        cursor += m
        current = sign * ck.eval_one(kind, ints, floats, bits)
        calls += 1
        size = m
        for b in range(m):
            untried[b] = b
        while size > 0 and calls < budget:
            pick = int(pool[cursor] * size)
            cursor += 1
            if pick >= size:
                pick = size - 1
            bit = untried[pick]
            bits[bit] ^= 1
            candidate = sign * ck.eval_one(kind, ints, floats, bits)
            calls += 1
            if candidate < current:
                current = candidate
                size = m
                for b in range(m):
                    untried[b] = b
            else:
                bits[bit] ^= 1
                untried[pick] = untried[size - 1]
                untried[size - 1] = bit
                size -= 1
        if current < best_cost:
            best_cost = current
            for b in range(m):
                out_bits[b] = bits[b]
    return best_cost, calls


def hill_climb(
    handle: CostFunctionHandle,
    budget: int,
    rng: np.random.Generator,
    seed: Optional[int] = None,
    record_restarts: Optional[list] = None,
) -> BaselineResult:
    """First-improvement hill climbing with random restarts.

    Tries untried bits in random order, accepts the first improving flip
    and resets the untried set, restarts from a fresh random string at a
    local optimum, and hard-stops at exactly ``budget`` evaluations.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    m = handle.size
    pool = rng.random(2 * budget + m)
    sign = -1.0 if handle.sense == SENSE_MAX else 1.0
    if handle.pack is not None and NUMBA_ENABLED and record_restarts is None:
        kind, ints, floats = handle.pack
        out_bits = np.zeros(m, dtype=np.uint8)
        best_cost, calls = _hc_kernel(kind, ints, floats, sign, m, budget, pool, out_bits)
        best_bits = out_bits
    else:
        eval_fn = lambda bits: sign * float(handle.eval(bits))
        best_bits, best_cost, calls = _hc_python(eval_fn, m, budget, pool, record_restarts)
    return BaselineResult(
        best_bits=tuple(int(b) for b in best_bits),
        best_cost=sign * best_cost,
        calls=calls,
        seed=seed,
        budget=budget,
    )


# ---------------------------------------------------------------------------
# simulated annealing (single-bit-flip moves, exponential schedule)
# ---------------------------------------------------------------------------


def _sa_python(eval_fn, m, budget, init_u, flip_idx, accept_u, t_max, t_min, stats=None):
    bits = (init_u < 0.5).astype(np.uint8)
    current = eval_fn(bits)
    best_cost = current
    best_bits = bits.copy()
    moves = budget - 1
    if moves > 0:
        log_ratio = math.log(t_min / t_max)
        for k in range(moves):
            frac = k / (moves - 1) if moves > 1 else 1.0
            temp = t_max * math.exp(log_ratio * frac)
            bit = flip_idx[k]
            bits[bit] ^= 1
            candidate = eval_fn(bits)
            delta = candidate - current
            if delta <= 0.0 or accept_u[k] < math.exp(-delta / temp):
                if stats is not None and delta > 0.0:
                    stats["uphill_accepted"] = stats.get("uphill_accepted", 0) + 1
                current = candidate
                if current < best_cost:
                    best_cost = current
                    best_bits = bits.copy()
            else:
                bits[bit] ^= 1
    return best_bits, best_cost, budget


@maybe_njit(cache=True)
def _sa_kernel(kind, ints, floats, sign, m, budget, init_u, flip_idx, accept_u, t_max, t_min, out_bits):
    bits = np.zeros(m, dtype=np.uint8)
    for b in range(m):
        bits[b] = 1 if init_u[b] < 0.5 else 0
    current = sign * ck.eval_one(kind, ints, floats, bits)
    best_cost = current
    for b in range(m):
        out_bits[b] = bits[b]
    moves = budget - 1
    if moves > 0:
        log_ratio = np.log(t_min / t_max)
        for k in range(moves):
            frac = k / (moves - 1) if moves > 1 else 1.0
            temp = t_max * np.exp(log_ratio * frac)
            bit = flip_idx[k]
            bits[bit] ^= 1
            candidate = sign * ck.eval_one(kind, ints, floats, bits)
            delta = candidate - current
            if delta <= 0.0 or accept_u[k] < np.exp(-delta / temp):
                current = candidate
                if current < best_cost:
                    best_cost = current
                    for b in range(m):
                        out_bits[b] = bits[b]
            else:
                bits[bit] ^= 1
    return best_cost, budget


def simulated_anneal(
    handle: CostFunctionHandle,
    budget: int,
    rng: np.random.Generator,
    schedule: Optional[AnnealSchedule] = None,
    seed: Optional[int] = None,
    stats: Optional[dict] = None,
) -> BaselineResult:
    """Metropolis single-bit-flip annealing that consumes exactly R calls.

    One evaluation for the uniform random initial state, then R - 1 moves
    with temperature decaying exponentially from t_max to t_min. The best
    state ever accepted is returned (improving moves are always accepted,
    so this equals the best candidate ever evaluated).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    schedule = schedule or AnnealSchedule()
    m = handle.size
    init_u = rng.random(m)
    flip_idx = rng.integers(0, m, size=max(budget - 1, 0))
    accept_u = rng.random(max(budget - 1, 0))
    sign = -1.0 if handle.sense == SENSE_MAX else 1.0
    if handle.pack is not None and NUMBA_ENABLED and stats is None:
        kind, ints, floats = handle.pack
        out_bits = np.zeros(m, dtype=np.uint8)
        best_cost, calls = _sa_kernel(
            kind, ints, floats, sign, m, budget, init_u, flip_idx, accept_u,
            schedule.t_max, schedule.t_min, out_bits,
        )
        best_bits = out_bits
    else:
        eval_fn = lambda bits: sign * float(handle.eval(bits))
        best_bits, best_cost, calls = _sa_python(
            eval_fn, m, budget, init_u, flip_idx, accept_u,
            schedule.t_max, schedule.t_min, stats,
        )
    return BaselineResult(
        best_bits=tuple(int(b) for b in best_bits),
        best_cost=sign * best_cost,
        calls=calls,
        seed=seed,
        budget=budget,
    )
