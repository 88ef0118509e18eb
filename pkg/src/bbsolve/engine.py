"""Training engine: sampled forward passes, shift-rule and bit-flip
gradients, SGD updates, tiling, budget accounting, and best tracking.

The engine always minimizes. Maximization problems are negated inside the
:class:`EvalLedger` (the loss trace is in this internal minimization sense);
reported results are in the problem's native sense.

Randomness flows through a single ``numpy.random.Generator`` in a fixed
order (forward draws, forward flips, then per-theta up/down draws and
flips, then per-alpha up/down flips), so one seed pins an entire run.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fock import (
    DEFAULT_MAX_DIM,
    FockDimensionError,
    fock_dim,
    get_basis,
    get_coupler_table,
)
from ._evolve_kernels import apply_coupler
from .interferometer import (
    CircuitLayout,
    build_layout,
    circuit_unitary,
    default_loop_lengths,
    input_pattern,
)
from .problems import SENSE_MAX, CostFunctionHandle
from .sampling import resolve_backend, sample_occupations_sequential


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def shift_rule_value(e_up: float, e_down: float, phi: float, scale: float = 1.0) -> float:
    """Shift-rule gradient estimate from two expectations.

    This is the rule exactly as used for training: scale * (up - down) /
    sin(phi). With scale = 1 it equals twice the analytic derivative in the
    small-phi limit; the constant is absorbed by the learning rate.
    """
    return scale * (e_up - e_down) / math.sin(phi)


def bitflip_grad_value(alpha: float, e_up: float, e_down: float) -> float:
    """Exact-gradient identity for one bit-flip parameter: f'(a)(E1 - E0)."""
    return float(sigmoid_deriv(alpha)) * (e_up - e_down)


@dataclass(frozen=True)
class BbsConfig:
    """Run hyperparameters. Defaults follow the reference evaluation setup."""

    updates: int = 200
    samples: int = 50
    lr_theta: float = 0.01
    lr_alpha: float = 0.05
    shift: float = math.pi / 2
    loop_lengths: Optional[tuple[int, ...]] = None  # None -> (1, 3, 9) trimmed
    tile_size: int = 0  # 0 -> no tiling
    seed: int = 0
    sampler_backend: str = "auto"
    gradient_scale: float = 1.0
    crn: bool = False  # shared auxiliary flips in bit-flip gradients
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        if self.updates < 1 or self.samples < 1:
            raise ValueError("need updates >= 1 and samples >= 1")
        if not 0.0 < self.shift < math.pi:
            raise ValueError("shift must lie in (0, pi)")
        if self.tile_size != 0 and self.tile_size < 2:
            raise ValueError("tile_size must be 0 or >= 2")
        if self.sampler_backend not in ("auto", "statevector", "sequential"):
            raise ValueError(f"unknown sampler backend {self.sampler_backend!r}")


@dataclass
class BbsParams:
    """Trainable state: one theta per coupler, one alpha per bit."""

    thetas: np.ndarray
    alphas: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return sigmoid(self.alphas)

    def copy(self) -> "BbsParams":
        return BbsParams(self.thetas.copy(), self.alphas.copy())


@dataclass(frozen=True)
class TilePlan:
    """Contiguous partition of bits into per-tile circuits."""

    size: int
    blocks: tuple[tuple[int, int], ...]  # (start, length)
    layouts: tuple[CircuitLayout, ...]

    @property
    def theta_counts(self) -> tuple[int, ...]:
        return tuple(l.coupler_count for l in self.layouts)

    @property
    def total_thetas(self) -> int:
        return sum(self.theta_counts)

    def theta_slices(self) -> list[slice]:
        out, off = [], 0
        for count in self.theta_counts:
            out.append(slice(off, off + count))
            off += count
        return out


def make_tiles(m: int, tile_size: int, loop_lengths) -> TilePlan:
    """Split m bits into contiguous blocks of at most ``tile_size``.

    A trailing singleton is rebalanced away (the previous block donates a
    mode, or absorbs the leftover when it cannot). Loops that do not fit a
    block are dropped for that block with a warning.
    """
    if m < 2:
        raise ValueError("need m >= 2")
    loops = tuple(loop_lengths)
    if tile_size == 0 or tile_size >= m:
        sizes = [m]
    else:
        sizes = [tile_size] * (m // tile_size)
        rest = m % tile_size
        if rest == 1:
            if sizes[-1] > 2:
                sizes[-1] -= 1
                sizes.append(2)
            else:
                sizes[-1] += 1
                warnings.warn(
                    f"trailing singleton absorbed; one block has size "
                    f"{sizes[-1]} > tile_size={tile_size}"
                )
        elif rest:
            sizes.append(rest)
    blocks, layouts, start = [], [], 0
    for size in sizes:
        fitting = tuple(l for l in loops if l < size)
        if len(fitting) < len(loops):
            warnings.warn(
                f"dropping loops {[l for l in loops if l >= size]} for a "
                f"size-{size} tile"
            )
        if not fitting:
            raise ValueError(f"no loop from {loops} fits a size-{size} tile")
        blocks.append((start, size))
        layouts.append(build_layout(size, fitting))
        start += size
    return TilePlan(size=m, blocks=tuple(blocks), layouts=tuple(layouts))


def budget_bound(
    m: int,
    loop_lengths=None,
    updates: int = 200,
    samples: int = 50,
    tile_plan: Optional[TilePlan] = None,
) -> int:
    """Upper bound on cost-function calls: N * S * (2T + 2m + 1).

    T counts beamsplitters; with tiling it sums over the per-tile layouts,
    untiled it is sum(m - l_i) and matches the closed formula verbatim.
    """
    if tile_plan is not None:
        total = sum(tile_plan.theta_counts)
        m = tile_plan.size
    else:
        loops = loop_lengths if loop_lengths is not None else default_loop_lengths(m)
        total = sum(m - l for l in loops)
    return updates * samples * (2 * total + 2 * m + 1)


class EvalLedger:
    """Memoizing cost-call counter with global best tracking.

    Every candidate evaluation request counts against the budget, cache
    hits included, so budget comparisons to the baselines stay
    conservative. The memo stores costs in the problem's native sense.
    """

    def __init__(self, handle: CostFunctionHandle, budget: Optional[int] = None):
        self.handle = handle
        self.budget = budget
        self.sign = -1.0 if handle.sense == SENSE_MAX else 1.0
        self.memo: dict[int, float] = {}
        self.call_count = 0
        self.best_native: Optional[float] = None
        self.best_bits: Optional[tuple[int, ...]] = None
        self._pow2 = 1 << np.arange(handle.size - 1, -1, -1, dtype=np.int64)

    @property
    def unique_count(self) -> int:
        return len(self.memo)

    @property
    def best_internal(self) -> float:
        return self.sign * self.best_native

    def evaluate_batch(self, bits_mat: np.ndarray) -> np.ndarray:
        """Evaluate candidates, returning costs in minimization sense."""
        bits_mat = np.asarray(bits_mat, dtype=np.uint8)
        keys = bits_mat.astype(np.int64) @ self._pow2
        costs = np.asarray(self.handle.batch(bits_mat), dtype=float)
        if not np.isfinite(costs).all():
            raise ValueError("cost function returned a non-finite value")
        self.call_count += len(keys)
        if self.budget is not None and self.call_count > self.budget:
            raise RuntimeError(
                f"budget exceeded: {self.call_count} > {self.budget}"
            )
        memo = self.memo
        for key, cost in zip(keys.tolist(), costs.tolist()):
            if key not in memo:
                memo[key] = cost
        idx = int(np.argmax(costs)) if self.sign < 0 else int(np.argmin(costs))
        cand = float(costs[idx])
        if self.best_native is None or self.sign * cand < self.sign * self.best_native:
            self.best_native = cand
            self.best_bits = tuple(int(b) for b in bits_mat[idx])
        return self.sign * costs

    def evaluate(self, bits) -> float:
        return float(self.evaluate_batch(np.asarray(bits, dtype=np.uint8)[None, :])[0])


def init_params(plan: TilePlan, rng: np.random.Generator) -> BbsParams:
    """Thetas uniform on (0, 2pi); alphas zero so every flip prob is 1/2."""
    thetas = rng.uniform(0.0, 2.0 * math.pi, plan.total_thetas)
    alphas = np.zeros(plan.size)
    return BbsParams(thetas=thetas, alphas=alphas)


def apply_bitflips(bits, probs, rng: np.random.Generator) -> np.ndarray:
    """Flip each bit independently with its probability."""
    bits = np.asarray(bits, dtype=np.uint8)
    probs = np.asarray(probs, dtype=float)
    if bits.shape[-1] != probs.shape[0]:
        raise ValueError("bit/probability length mismatch")
    flips = rng.random(bits.shape) < probs
    return bits ^ flips.astype(np.uint8)


class _TileRuntime:
    """Per-tile circuit state: prefix-cached evolution or per-sample unitary."""

    def __init__(self, layout: CircuitLayout, backend: str, max_dim: int):
        self.layout = layout
        self.m = layout.modes
        self.input = input_pattern(self.m)
        self.n = int(self.input.sum())
        self.backend = resolve_backend(backend, self.m, self.n, max_dim)
        self.thetas: Optional[np.ndarray] = None
        if self.backend == "statevector":
            dim = fock_dim(self.m, self.n)
            if dim > max_dim:
                raise FockDimensionError(
                    f"Fock dimension {dim} exceeds bound {max_dim} for "
                    f"m={self.m}, n={self.n}; use the sequential sampler backend"
                )
            self.basis = get_basis(self.m, self.n)
            self.tables = [
                get_coupler_table(self.basis, a - 1, b - 1) for a, b in layout.couplers
            ]
            self.input_index = self.basis.rank(self.input)
            self.prefix = np.zeros((layout.coupler_count + 1, self.basis.dim))
            self.base_cdf: Optional[np.ndarray] = None
        else:
            self.base_u: Optional[np.ndarray] = None

    def set_thetas(self, thetas: np.ndarray):
        self.thetas = np.asarray(thetas, dtype=float)
        if self.backend == "statevector":
            basis = self.basis
            self.prefix[0] = 0.0
            self.prefix[0, self.input_index] = 1.0
            for c, theta in enumerate(self.thetas):
                self.prefix[c + 1] = self.prefix[c]
                apply_coupler(
                    self.prefix[c + 1], self.tables[c], theta, basis.choose_f, basis.sqfact
                )
            self.base_cdf = np.cumsum(self.prefix[-1] ** 2)
        else:
            self.base_u = circuit_unitary(self.layout, self.thetas)

    def shifted_cdf(self, local_c: int, theta_val: float) -> np.ndarray:
        basis = self.basis
        amps = self.prefix[local_c].copy()
        apply_coupler(amps, self.tables[local_c], theta_val, basis.choose_f, basis.sqfact)
        for c in range(local_c + 1, len(self.tables)):
            apply_coupler(amps, self.tables[c], self.thetas[c], basis.choose_f, basis.sqfact)
        return np.cumsum(amps**2)

    def _draw_from_cdf(self, cdf: np.ndarray, rng, count: int) -> np.ndarray:
        draws = np.searchsorted(cdf, rng.random(count), side="right")
        np.clip(draws, 0, cdf.size - 1, out=draws)
        return self.basis.thresholded[draws]

    def sample_base(self, rng, count: int) -> np.ndarray:
        if self.backend == "statevector":
            return self._draw_from_cdf(self.base_cdf, rng, count)
        occ = sample_occupations_sequential(self.base_u, self.input, rng, count)
        return (occ > 0).astype(np.uint8)

    def sample_shifted(self, local_c: int, theta_val: float, rng, count: int) -> np.ndarray:
        if self.backend == "statevector":
            return self._draw_from_cdf(self.shifted_cdf(local_c, theta_val), rng, count)
        shifted = self.thetas.copy()
        shifted[local_c] = theta_val
        u = circuit_unitary(self.layout, shifted)
        occ = sample_occupations_sequential(u, self.input, rng, count)
        return (occ > 0).astype(np.uint8)


class _RunState:
    """One configured run: tiles, parameters, ledger, and gradient machinery."""

    def __init__(
        self,
        plan: TilePlan,
        params: BbsParams,
        ledger: EvalLedger,
        rng: np.random.Generator,
        samples: int,
        shift: float,
        gradient_scale: float = 1.0,
        crn: bool = False,
        backend: str = "auto",
        max_dim: int = DEFAULT_MAX_DIM,
    ):
        if plan.size != ledger.handle.size:
            raise ValueError("plan size does not match problem size")
        if params.thetas.shape != (plan.total_thetas,):
            raise ValueError("theta vector does not match the tile plan")
        self.plan = plan
        self.params = params
        self.ledger = ledger
        self.rng = rng
        self.samples = samples
        self.shift = shift
        self.scale = gradient_scale
        self.crn = crn
        self.tiles = [_TileRuntime(l, backend, max_dim) for l in plan.layouts]
        self.slices = plan.theta_slices()
        # map global coupler index -> (tile index, local index)
        self.coupler_map = [
            (t, c)
            for t, layout in enumerate(plan.layouts)
            for c in range(layout.coupler_count)
        ]
        self.refresh()

    def refresh(self):
        """Push current thetas into every tile (once per update step)."""
        for tile, sl in zip(self.tiles, self.slices):
            tile.set_thetas(self.params.thetas[sl])

    def _draw_raw(self, shifted_tile=None, local_c=None, theta_val=None) -> np.ndarray:
        cols = []
        for t, tile in enumerate(self.tiles):
            if t == shifted_tile:
                cols.append(tile.sample_shifted(local_c, theta_val, self.rng, self.samples))
            else:
                cols.append(tile.sample_base(self.rng, self.samples))
        return np.concatenate(cols, axis=1)

    def _flip(self, raw: np.ndarray, force_index=None, force_up=False, uniforms=None):
        probs = self.params.probs
        if uniforms is None:
            uniforms = self.rng.random(raw.shape)
        flips = uniforms < probs[None, :]
        if force_index is not None:
            flips[:, force_index] = force_up
        return raw ^ flips.astype(np.uint8), uniforms

    def forward_pass(self):
        """Sample, flip, evaluate; returns (mean internal cost, raw samples)."""
        raw = self._draw_raw()
        candidates, _ = self._flip(raw)
        costs = self.ledger.evaluate_batch(candidates)
        return float(costs.mean()), raw

    def theta_gradient(self, index: int) -> float:
        t, local_c = self.coupler_map[index]
        base = self.params.thetas[self.slices[t]][local_c]
        means = []
        for theta_val in (base + self.shift, base - self.shift):
            raw = self._draw_raw(shifted_tile=t, local_c=local_c, theta_val=theta_val)
            candidates, _ = self._flip(raw)
            means.append(float(self.ledger.evaluate_batch(candidates).mean()))
        return shift_rule_value(means[0], means[1], self.shift, self.scale)

    def alpha_gradient(self, index: int, raw: np.ndarray) -> float:
        if raw.shape[0] == 0:
            raise ValueError("no stored samples for the bit-flip gradient")
        up, uniforms = self._flip(raw, force_index=index, force_up=True)
        e_up = float(self.ledger.evaluate_batch(up).mean())
        shared = uniforms if self.crn else None
        down, _ = self._flip(raw, force_index=index, force_up=False, uniforms=shared)
        e_down = float(self.ledger.evaluate_batch(down).mean())
        return bitflip_grad_value(self.params.alphas[index], e_up, e_down)


def sgd_update(
    params: BbsParams,
    theta_grads: np.ndarray,
    alpha_grads: np.ndarray,
    lr_theta: float,
    lr_alpha: float,
) -> BbsParams:
    """Synchronous plain-SGD step on all parameters."""
    theta_grads = np.asarray(theta_grads, dtype=float)
    alpha_grads = np.asarray(alpha_grads, dtype=float)
    if theta_grads.shape != params.thetas.shape or alpha_grads.shape != params.alphas.shape:
        raise ValueError("gradient vector lengths do not match parameters")
    if not (np.isfinite(theta_grads).all() and np.isfinite(alpha_grads).all()):
        raise ValueError("non-finite gradient")
    return BbsParams(
        thetas=params.thetas - lr_theta * theta_grads,
        alphas=params.alphas - lr_alpha * alpha_grads,
    )


@dataclass
class TrainingTrace:
    """Per-update history: loss, running best (minimization sense), params."""

    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    best_costs: list = field(default_factory=list)
    prob_snapshots: list = field(default_factory=list)
    theta_snapshots: list = field(default_factory=list)

    def append(self, step, loss, best, probs, thetas):
        self.steps.append(int(step))
        self.losses.append(float(loss))
        self.best_costs.append(float(best))
        self.prob_snapshots.append(np.asarray(probs, dtype=float).copy())
        self.theta_snapshots.append(np.asarray(thetas, dtype=float).copy())

    def __len__(self):
        return len(self.steps)

    def write_csv(self, path):
        m = len(self.prob_snapshots[0]) if self.prob_snapshots else 0
        t = len(self.theta_snapshots[0]) if self.theta_snapshots else 0
        header = (
            ["step", "loss", "best_cost"]
            + [f"p_{i + 1}" for i in range(m)]
            + [f"theta_{i + 1}" for i in range(t)]
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self.steps)):
                writer.writerow(
                    [self.steps[i], repr(self.losses[i]), repr(self.best_costs[i])]
                    + [repr(v) for v in self.prob_snapshots[i]]
                    + [repr(v) for v in self.theta_snapshots[i]]
                )


@dataclass
class BbsResult:
    best_bits: tuple[int, ...]
    best_cost: float  # native sense
    trace: TrainingTrace
    calls: int
    unique_evals: int
    budget: int
    seed: Optional[int]

    def to_json_dict(self) -> dict:
        return {
            "best_bits": list(self.best_bits),
            "best_cost": self.best_cost,
            "calls": self.calls,
            "unique_evals": self.unique_evals,
            "budget_bound": self.budget,
            "seed": self.seed,
        }


def make_plan(m: int, config: BbsConfig) -> TilePlan:
    loops = config.loop_lengths if config.loop_lengths is not None else default_loop_lengths(m)
    return make_tiles(m, config.tile_size, loops)


def run_bbs(
    problem: CostFunctionHandle,
    config: BbsConfig,
    rng: Optional[np.random.Generator] = None,
) -> BbsResult:
    """Full training run; the returned best includes gradient-pass candidates."""
    plan = make_plan(problem.size, config)
    budget = budget_bound(
        problem.size, updates=config.updates, samples=config.samples, tile_plan=plan
    )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    params = init_params(plan, rng)
    ledger = EvalLedger(problem, budget)
    state = _RunState(
        plan,
        params,
        ledger,
        rng,
        samples=config.samples,
        shift=config.shift,
        gradient_scale=config.gradient_scale,
        crn=config.crn,
        backend=config.sampler_backend,
        max_dim=config.max_dim,
    )
    trace = TrainingTrace()
    n_thetas = plan.total_thetas
    for step in range(1, config.updates + 1):
        state.refresh()
        loss, raw = state.forward_pass()
        theta_grads = np.array(
            [state.theta_gradient(c) for c in range(n_thetas)]
        )
        alpha_grads = np.array(
            [state.alpha_gradient(i, raw) for i in range(plan.size)]
        )
        new_params = sgd_update(
            state.params, theta_grads, alpha_grads, config.lr_theta, config.lr_alpha
        )
        trace.append(step, loss, ledger.best_internal, state.params.probs, state.params.thetas)
        state.params = new_params
    assert ledger.call_count <= budget
    return BbsResult(
        best_bits=ledger.best_bits,
        best_cost=ledger.best_native,
        trace=trace,
        calls=ledger.call_count,
        unique_evals=ledger.unique_count,
        budget=budget,
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# standalone single-step operations (same machinery as the run loop)
# ---------------------------------------------------------------------------


def _transient_state(plan, params, problem_or_ledger, samples, rng, **kw):
    ledger = (
        problem_or_ledger
        if isinstance(problem_or_ledger, EvalLedger)
        else EvalLedger(problem_or_ledger)
    )
    return (
        _RunState(plan, params, ledger, rng, samples=samples, shift=kw.pop("shift", math.pi / 2), **kw),
        ledger,
    )


def estimate_mean_cost(plan, params, problem, samples, rng, ledger=None, **kw):
    """Forward pass: S raw samples (stored pre-flip), flipped, costed.

    Returns (mean cost in minimization sense, raw threshold samples).
    """
    state, _ = _transient_state(plan, params, ledger or problem, samples, rng, **kw)
    return state.forward_pass()


def grad_theta(plan, params, index, problem, samples, phi, rng, ledger=None, scale=1.0, **kw):
    state, _ = _transient_state(
        plan, params, ledger or problem, samples, rng, shift=phi, gradient_scale=scale, **kw
    )
    return state.theta_gradient(index)


def grad_alpha(raw_samples, params, index, problem, ledger=None, rng=None, crn=False):
    """Bit-flip gradient from this step's stored raw samples."""
    raw = np.asarray(raw_samples, dtype=np.uint8)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise ValueError("need a non-empty (S, m) array of stored raw samples")
    ledger = ledger if isinstance(ledger, EvalLedger) else EvalLedger(ledger or problem)
    if rng is None:
        rng = np.random.default_rng(0)
    probs = sigmoid(params.alphas)
    uniforms = rng.random(raw.shape)
    flips = uniforms < probs[None, :]
    flips[:, index] = True
    e_up = float(ledger.evaluate_batch(raw ^ flips.astype(np.uint8)).mean())
    uniforms2 = uniforms if crn else rng.random(raw.shape)
    flips = uniforms2 < probs[None, :]
    flips[:, index] = False
    e_down = float(ledger.evaluate_batch(raw ^ flips.astype(np.uint8)).mean())
    return bitflip_grad_value(params.alphas[index], e_up, e_down)
