import math

import numpy as np
import pytest
from scipy import stats

from bbsolve.engine import (
    BbsConfig,
    BbsParams,
    EvalLedger,
    apply_bitflips,
    budget_bound,
    estimate_mean_cost,
    grad_alpha,
    grad_theta,
    init_params,
    make_plan,
    make_tiles,
    run_bbs,
    sgd_update,
    sigmoid,
)
from bbsolve.fock import evolve, output_distribution
from bbsolve.interferometer import build_layout, input_pattern
from bbsolve.problems import (
    CostFunctionHandle,
    brute_force,
    gen_knapsack,
    knapsack_handle,
)

from oracles import candidate_distribution, threshold_distribution


def constant_handle(m, value=7.0):
    return CostFunctionHandle(
        size=m, sense="minimize", eval=lambda bits: value, kind="constant"
    )


def onesum_handle(m):
    return CostFunctionHandle(
        size=m,
        sense="minimize",
        eval=lambda bits: float(np.sum(bits)),
        kind="onesum",
        eval_batch=lambda mat: mat.sum(axis=1).astype(float),
    )


class TestBudgetBound:
    def test_reference_configuration(self):
        assert budget_bound(30, (1, 3, 9), updates=200, samples=50) == 2_150_000

    def test_size_ten(self):
        assert budget_bound(10, (1, 3, 9), updates=200, samples=50) == 550_000

    def test_hardware_single_loop(self):
        assert budget_bound(8, (1,), updates=50, samples=20) == 31_000

    def test_tiled_plan(self):
        plan = make_tiles(16, 8, (1,))
        # two tiles of 8 modes, 7 couplers each
        assert budget_bound(16, updates=10, samples=5, tile_plan=plan) == 10 * 5 * (
            2 * 14 + 32 + 1
        )


class TestMakeTiles:
    def test_even_split(self):
        plan = make_tiles(16, 8, (1, 3))
        assert plan.blocks == ((0, 8), (8, 8))

    def test_remainder(self):
        plan = make_tiles(18, 8, (1,))
        assert [s for _, s in plan.blocks] == [8, 8, 2]

    def test_degenerate_single_tile(self):
        plan = make_tiles(8, 8, (1, 3))
        assert plan.blocks == ((0, 8),)
        assert plan.layouts[0].loop_lengths == (1, 3)

    def test_trailing_singleton_rebalanced(self):
        plan = make_tiles(17, 8, (1,))
        assert [s for _, s in plan.blocks] == [8, 7, 2]
        assert sum(s for _, s in plan.blocks) == 17

    def test_drops_oversized_loops_per_tile(self):
        with pytest.warns(UserWarning):
            plan = make_tiles(12, 4, (1, 3, 9))
        assert all(layout.loop_lengths == (1, 3) for layout in plan.layouts)

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            make_tiles(1, 0, (1,))


class TestConfigValidation:
    def test_invariants_enforced(self):
        for bad in (
            dict(updates=0),
            dict(samples=0),
            dict(shift=0.0),
            dict(shift=math.pi),
            dict(tile_size=1),
            dict(sampler_backend="qpu"),
        ):
            with pytest.raises(ValueError):
                BbsConfig(**bad)

    def test_tile_plan_partitions_modes(self):
        for m, tile in [(16, 8), (18, 8), (17, 8), (10, 4), (9, 3)]:
            plan = make_tiles(m, tile, (1,))
            covered = []
            for start, size in plan.blocks:
                covered.extend(range(start, start + size))
            assert covered == list(range(m))  # disjoint, ordered, complete
            assert all(size >= 2 for _, size in plan.blocks)


class TestInitParams:
    def test_probs_half_exactly(self):
        plan = make_plan(6, BbsConfig(updates=1, samples=1))
        params = init_params(plan, np.random.default_rng(0))
        assert (params.probs == 0.5).all()
        assert (params.alphas == 0.0).all()

    def test_deterministic(self):
        plan = make_plan(6, BbsConfig(updates=1, samples=1))
        a = init_params(plan, np.random.default_rng(3))
        b = init_params(plan, np.random.default_rng(3))
        np.testing.assert_array_equal(a.thetas, b.thetas)

    def test_theta_distribution(self):
        plan = make_tiles(2, 0, (1,))
        draws = np.array(
            [init_params(plan, np.random.default_rng(s)).thetas[0] for s in range(10_000)]
        )
        sigma_mean = (2 * math.pi / math.sqrt(12)) / 100
        assert abs(draws.mean() - math.pi) < 3 * sigma_mean
        assert draws.min() >= 0 and draws.max() <= 2 * math.pi


class TestApplyBitflips:
    def test_zero_and_one_probs(self):
        bits = np.array([1, 0, 1, 1], dtype=np.uint8)
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(apply_bitflips(bits, np.zeros(4), rng), bits)
        np.testing.assert_array_equal(apply_bitflips(bits, np.ones(4), rng), 1 - bits)

    def test_half_probs_uniform_exact(self):
        # enumerated: p = 1/2 makes every candidate exactly 2^-m likely
        for m in (2, 3, 4):
            thresh = {(1,) * m: 0.7, (0,) * m: 0.3}
            dist = candidate_distribution(thresh, np.full(m, 0.5))
            for p in dist.values():
                assert p == pytest.approx(2.0**-m, abs=1e-12)

    def test_half_probs_uniform_chisquare(self):
        rng = np.random.default_rng(99)
        m = 4
        base = np.tile(np.array([1, 0, 1, 0], dtype=np.uint8), (1_000_000, 1))
        flipped = apply_bitflips(base, np.full(m, 0.5), rng)
        keys = flipped @ (1 << np.arange(m - 1, -1, -1))
        counts = np.bincount(keys, minlength=16)
        assert stats.chisquare(counts).pvalue > 0.001

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            apply_bitflips(np.zeros(3, dtype=np.uint8), np.zeros(4), np.random.default_rng(0))


class TestEvalLedger:
    def test_counts_and_memo(self):
        handle = onesum_handle(4)
        ledger = EvalLedger(handle)
        bits = np.array([[0, 0, 0, 0], [1, 1, 1, 1], [0, 0, 0, 0]], dtype=np.uint8)
        costs = ledger.evaluate_batch(bits)
        np.testing.assert_array_equal(costs, [0, 4, 0])
        assert ledger.call_count == 3
        assert ledger.unique_count == 2
        assert ledger.best_native == 0.0
        assert ledger.best_bits == (0, 0, 0, 0)

    def test_maximize_negates(self):
        handle = knapsack_handle(gen_knapsack(4, np.random.default_rng(0)))
        ledger = EvalLedger(handle)
        internal = ledger.evaluate_batch(np.eye(4, dtype=np.uint8))
        assert (internal == -np.array([handle.eval(r) for r in np.eye(4, dtype=np.uint8)])).all()
        assert ledger.best_native == max(handle.eval(r) for r in np.eye(4, dtype=np.uint8))

    def test_nonfinite_rejected(self):
        handle = CostFunctionHandle(
            size=2, sense="minimize", eval=lambda b: float("nan"), kind="bad"
        )
        with pytest.raises(ValueError):
            EvalLedger(handle).evaluate(np.zeros(2, dtype=np.uint8))

    def test_best_is_memo_extremum(self):
        handle = onesum_handle(5)
        ledger = EvalLedger(handle)
        rng = np.random.default_rng(2)
        ledger.evaluate_batch(rng.integers(0, 2, size=(64, 5)).astype(np.uint8))
        assert ledger.best_native == min(ledger.memo.values())


class TestEstimateMeanCost:
    def test_constant_cost(self):
        plan = make_plan(4, BbsConfig(updates=1, samples=1))
        params = init_params(plan, np.random.default_rng(1))
        mean, raw = estimate_mean_cost(
            plan, params, constant_handle(4), 20, np.random.default_rng(2)
        )
        assert mean == 7.0
        assert raw.shape == (20, 4)

    def test_uniform_bit_sum(self):
        # p = 1/2 makes candidates uniform; E[sum] = m/2 = 2
        plan = make_plan(4, BbsConfig(updates=1, samples=1))
        params = init_params(plan, np.random.default_rng(1))
        s = 10_000
        mean, _ = estimate_mean_cost(
            plan, params, onesum_handle(4), s, np.random.default_rng(3)
        )
        sigma = math.sqrt(4 * 0.25) / math.sqrt(s)
        assert abs(mean - 2.0) < 4 * sigma

    def test_ledger_sees_all_calls(self):
        plan = make_plan(4, BbsConfig(updates=1, samples=1))
        params = init_params(plan, np.random.default_rng(1))
        handle = onesum_handle(4)
        ledger = EvalLedger(handle)
        estimate_mean_cost(plan, params, handle, 15, np.random.default_rng(0), ledger)
        assert ledger.call_count == 15


class TestSgdUpdate:
    def _params(self):
        return BbsParams(thetas=np.array([1.0]), alphas=np.array([0.0]))

    def test_zero_gradients_noop(self):
        p = self._params()
        q = sgd_update(p, np.zeros(1), np.zeros(1), 0.01, 0.05)
        np.testing.assert_array_equal(q.thetas, p.thetas)
        np.testing.assert_array_equal(q.alphas, p.alphas)

    def test_theta_step(self):
        q = sgd_update(self._params(), np.array([1.0]), np.zeros(1), 0.01, 0.05)
        assert q.thetas[0] == pytest.approx(0.99)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            sgd_update(self._params(), np.array([np.inf]), np.zeros(1), 0.01, 0.05)

    def test_alpha_moves_probability_downhill(self):
        # one-bit minimize-C(x)=x problem: the update must push p toward 0
        params = BbsParams(thetas=np.empty(0), alphas=np.array([0.0]))
        handle = CostFunctionHandle(
            size=1, sense="minimize", eval=lambda b: float(b[0]), kind="bit"
        )
        raw = np.zeros((8, 1), dtype=np.uint8)
        g = grad_alpha(raw, params, 0, handle, rng=np.random.default_rng(0))
        updated = sgd_update(params, np.empty(0), np.array([g]), 0.01, 0.05)
        assert sigmoid(updated.alphas[0]) < 0.5


class TestGradTheta:
    def test_constant_cost_exact_zero(self):
        plan = make_plan(3, BbsConfig(updates=1, samples=1, loop_lengths=(1,)))
        params = init_params(plan, np.random.default_rng(5))
        g = grad_theta(
            plan, params, 0, constant_handle(3), 1000, math.pi / 2, np.random.default_rng(6)
        )
        assert g == 0.0

    def test_two_s_cost_calls(self):
        plan = make_plan(3, BbsConfig(updates=1, samples=1, loop_lengths=(1,)))
        params = init_params(plan, np.random.default_rng(5))
        handle = onesum_handle(3)
        ledger = EvalLedger(handle)
        grad_theta(plan, params, 1, handle, 25, math.pi / 2, np.random.default_rng(6), ledger)
        assert ledger.call_count == 50


class TestGradAlpha:
    def test_single_bit_worked_example(self):
        # raw sample 0, alpha 0: (E|p=1 - E|p=0) * sigma'(0) = (1 - 0) / 4
        params = BbsParams(thetas=np.empty(0), alphas=np.array([0.0]))
        handle = CostFunctionHandle(
            size=1, sense="minimize", eval=lambda b: float(b[0]), kind="bit"
        )
        raw = np.zeros((1, 1), dtype=np.uint8)
        g = grad_alpha(raw, params, 0, handle, rng=np.random.default_rng(0))
        assert g == pytest.approx(0.25)

    def test_cost_independent_of_bit(self):
        params = BbsParams(thetas=np.empty(0), alphas=np.zeros(2))
        handle = CostFunctionHandle(
            size=2, sense="minimize", eval=lambda b: float(b[1]), kind="bit2"
        )
        raw = np.random.default_rng(1).integers(0, 2, (2000, 2)).astype(np.uint8)
        g = grad_alpha(raw, params, 0, handle, rng=np.random.default_rng(2))
        # zero in expectation; bound by 4 sigma of the Monte Carlo estimate
        assert abs(g) < 4 * 0.25 / math.sqrt(2000)

    def test_empty_store_rejected(self):
        params = BbsParams(thetas=np.empty(0), alphas=np.zeros(1))
        with pytest.raises(ValueError):
            grad_alpha(
                np.empty((0, 1), dtype=np.uint8),
                params,
                0,
                constant_handle(1),
                rng=np.random.default_rng(0),
            )

    def test_crn_flag_deterministic(self):
        params = BbsParams(thetas=np.empty(0), alphas=np.zeros(3))
        handle = onesum_handle(3)
        raw = np.random.default_rng(3).integers(0, 2, (50, 3)).astype(np.uint8)
        a = grad_alpha(raw, params, 1, handle, rng=np.random.default_rng(4), crn=True)
        b = grad_alpha(raw, params, 1, handle, rng=np.random.default_rng(4), crn=True)
        assert a == b


class TestReachability:
    def test_exact_uniform_for_small_m(self):
        rng = np.random.default_rng(0)
        for m in (2, 3, 4):
            layout = build_layout(m, (1,))
            thetas = rng.uniform(0, 2 * np.pi, layout.coupler_count)
            state = evolve(input_pattern(m), layout, thetas)
            thresh = threshold_distribution(output_distribution(state))
            dist = candidate_distribution(thresh, np.full(m, 0.5))
            assert len(dist) == 2**m
            for p in dist.values():
                assert p == pytest.approx(2.0**-m, abs=1e-12)


class TestRunBbs:
    CFG = BbsConfig(updates=12, samples=6, seed=42, loop_lengths=(1, 3))

    def test_finds_small_knapsack_optimum(self):
        inst = gen_knapsack(6, np.random.default_rng(0))
        handle = knapsack_handle(inst)
        result = run_bbs(handle, BbsConfig(updates=200, samples=50, seed=7))
        oracle = brute_force(handle)
        assert result.best_cost == oracle.optimum

    def test_trace_shape_and_first_loss(self):
        inst = gen_knapsack(8, np.random.default_rng(1))
        handle = knapsack_handle(inst)
        cfg = BbsConfig(updates=15, samples=40, seed=3)
        result = run_bbs(handle, cfg)
        assert len(result.trace) == 15
        # first forward pass sees uniform candidates (p = 1/2 everywhere)
        uniform_mean = np.mean(
            [-handle.eval(np.array(b)) for b in np.ndindex(*([2] * 8))]
        )
        sigma = np.std(
            [-handle.eval(np.array(b)) for b in np.ndindex(*([2] * 8))]
        ) / math.sqrt(40)
        assert abs(result.trace.losses[0] - uniform_mean) < 5 * sigma

    def test_budget_and_calls(self):
        inst = gen_knapsack(7, np.random.default_rng(2))
        handle = knapsack_handle(inst)
        result = run_bbs(handle, self.CFG)
        plan = make_plan(7, self.CFG)
        bound = budget_bound(7, updates=12, samples=6, tile_plan=plan)
        assert result.budget == bound
        assert result.calls == bound  # every request counted, hits included
        assert result.unique_evals <= result.calls

    def test_deterministic(self):
        inst = gen_knapsack(6, np.random.default_rng(4))
        handle = knapsack_handle(inst)
        a = run_bbs(handle, self.CFG)
        b = run_bbs(handle, self.CFG)
        assert a.best_bits == b.best_bits
        assert a.best_cost == b.best_cost
        np.testing.assert_array_equal(a.trace.losses, b.trace.losses)
        np.testing.assert_array_equal(
            np.array(a.trace.theta_snapshots), np.array(b.trace.theta_snapshots)
        )

    def test_best_monotone_in_minimization_sense(self):
        inst = gen_knapsack(8, np.random.default_rng(5))
        result = run_bbs(knapsack_handle(inst), self.CFG)
        best = np.array(result.trace.best_costs)
        assert (np.diff(best) <= 0).all()
        # trace is in minimization sense: knapsack values appear negated,
        # while the result reports the native (maximize) sense
        assert best[-1] == -result.best_cost

    def test_tiling_degenerate_bit_for_bit(self):
        inst = gen_knapsack(6, np.random.default_rng(6))
        handle = knapsack_handle(inst)
        untiled = run_bbs(handle, BbsConfig(updates=6, samples=5, seed=9, loop_lengths=(1,)))
        tiled = run_bbs(
            handle,
            BbsConfig(updates=6, samples=5, seed=9, loop_lengths=(1,), tile_size=6),
        )
        assert untiled.best_bits == tiled.best_bits
        assert untiled.trace.losses == tiled.trace.losses
        np.testing.assert_array_equal(
            np.array(untiled.trace.prob_snapshots), np.array(tiled.trace.prob_snapshots)
        )

    def test_tiled_run_covers_full_length(self):
        inst = gen_knapsack(10, np.random.default_rng(7))
        handle = knapsack_handle(inst)
        cfg = BbsConfig(updates=8, samples=5, seed=1, loop_lengths=(1,), tile_size=4)
        result = run_bbs(handle, cfg)
        assert len(result.best_bits) == 10
        plan = make_plan(10, cfg)
        assert [s for _, s in plan.blocks] == [4, 4, 2]
        assert result.calls == budget_bound(10, updates=8, samples=5, tile_plan=plan)

    def test_untrained_run_is_budget_matched_random_search(self):
        inst = gen_knapsack(8, np.random.default_rng(8))
        handle = knapsack_handle(inst)
        cfg = BbsConfig(updates=20, samples=10, seed=11, lr_theta=0.0, lr_alpha=0.0)
        result = run_bbs(handle, cfg)
        # parameters never move, candidates stay uniform
        assert (np.array(result.trace.prob_snapshots) == 0.5).all()
        first = result.trace.theta_snapshots[0]
        np.testing.assert_array_equal(result.trace.theta_snapshots[-1], first)
        # budget far exceeds 2^8, so uniform search must have hit the optimum
        assert result.best_cost == brute_force(handle).optimum

    def test_gradient_scale_absorbed_by_learning_rate(self):
        # doubling the shift-rule scale while halving the theta rate leaves
        # the entire trajectory untouched (alpha updates are not scaled)
        inst = gen_knapsack(6, np.random.default_rng(12))
        handle = knapsack_handle(inst)
        base = BbsConfig(
            updates=6, samples=5, seed=4, loop_lengths=(1,), lr_theta=0.01,
            gradient_scale=1.0,
        )
        doubled = BbsConfig(
            updates=6, samples=5, seed=4, loop_lengths=(1,), lr_theta=0.005,
            gradient_scale=2.0,
        )
        a = run_bbs(handle, base)
        b = run_bbs(handle, doubled)
        assert a.trace.losses == b.trace.losses
        np.testing.assert_array_equal(
            np.array(a.trace.theta_snapshots), np.array(b.trace.theta_snapshots)
        )
        assert a.best_bits == b.best_bits

    def test_crn_run_deterministic(self):
        inst = gen_knapsack(5, np.random.default_rng(13))
        handle = knapsack_handle(inst)
        cfg = BbsConfig(updates=4, samples=6, seed=2, loop_lengths=(1,), crn=True)
        a = run_bbs(handle, cfg)
        b = run_bbs(handle, cfg)
        assert a.best_bits == b.best_bits
        assert a.trace.losses == b.trace.losses
        assert a.calls == a.budget

    def test_sequential_backend_runs(self):
        inst = gen_knapsack(6, np.random.default_rng(9))
        handle = knapsack_handle(inst)
        cfg = BbsConfig(
            updates=4, samples=5, seed=2, loop_lengths=(1,), sampler_backend="sequential"
        )
        result = run_bbs(handle, cfg)
        assert len(result.trace) == 4
        assert result.calls == result.budget

    def test_trace_csv(self, tmp_path):
        inst = gen_knapsack(5, np.random.default_rng(10))
        result = run_bbs(knapsack_handle(inst), BbsConfig(updates=3, samples=4, seed=0))
        path = tmp_path / "trace.csv"
        result.trace.write_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0].startswith("step,loss,best_cost,p_1")
        assert len(rows) == 4
