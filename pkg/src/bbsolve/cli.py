"""Command-line front end.

Subcommands: ``gen`` (instance files), ``solve`` (one run on one instance),
``bench`` (budget-matched suite), ``ablate`` (bench with ablation modes),
``trace`` (re-emit plot data from a trace CSV). A JSON config file can seed
any bench run; command-line flags override file values. ``BBS_SEED`` sets
the default seed. ``--dry-run`` prints the call budget and Fock dimensions
without sampling anything.
"""

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .baselines import AnnealSchedule, hill_climb, simulated_anneal
from .bench import (
    AlgoSpec,
    ExperimentSuite,
    emit_report,
    format_summary_table,
    run_suite,
    suite_budget,
    tsp_points_for_size,
)
from .engine import BbsConfig, budget_bound, make_plan, run_bbs
from .fock import fock_dim
from .interferometer import input_pattern
from .problems import (
    gen_deconfliction,
    gen_knapsack,
    gen_tsp,
    load_instance,
    make_handle,
    save_instance,
    tsp_bit_length,
)

_BENCH_CONFIG_KEYS = {
    "problem", "sizes", "instances_per_size", "algorithms", "seed",
    "updates", "samples", "lr_theta", "lr_alpha", "shift", "loops",
    "tile_size", "sampler_backend", "maneuvers", "conflict_rate",
    "capacity_ratio", "t_max", "t_min", "out", "jobs", "traces",
}

HARDWARE_PRESET = {
    "loops": [1],
    "tile_size": 8,
    "updates": 50,
    "samples": 20,
    "instances_per_size": 10,
}


def _default_seed() -> int:
    return int(os.environ.get("BBS_SEED", "0"))


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if v != "")


def _load_config_file(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise SystemExit(f"config {path}: expected a JSON object")
    unknown = set(payload) - _BENCH_CONFIG_KEYS
    if unknown:
        raise SystemExit(f"config {path}: unknown keys {sorted(unknown)}")
    return payload


def _clamped_tile_size(tile_size: int, m: int) -> int:
    if tile_size and tile_size > m:
        warnings.warn(f"tile_size {tile_size} > problem size {m}; running untiled")
        return 0
    return tile_size


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for index in range(args.count):
        child = np.random.default_rng([args.seed, args.size, index])
        if args.kind == "knapsack":
            inst = gen_knapsack(args.size, child, capacity_ratio=args.capacity_ratio)
        elif args.kind == "deconfliction":
            if args.size % args.maneuvers:
                print(
                    f"error: size {args.size} not divisible by K={args.maneuvers}",
                    file=sys.stderr,
                )
                return 2
            inst = gen_deconfliction(
                args.size // args.maneuvers, args.maneuvers, args.conflict_rate, child
            )
        else:
            try:
                n_points = tsp_points_for_size(args.size)
            except ValueError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            inst = gen_tsp(n_points, child)
        path = out / f"{args.kind}_{args.size}_{index}.json"
        save_instance(inst, path)
        print(path)
    return 0


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _solve_bbs_config(args, m: int) -> BbsConfig:
    loops = _parse_int_list(args.loops) if args.loops else None
    kwargs = dict(
        updates=args.updates,
        samples=args.samples,
        lr_theta=args.lr_theta,
        lr_alpha=args.lr_alpha,
        shift=args.shift,
        loop_lengths=loops,
        tile_size=_clamped_tile_size(args.tile_size, m),
        seed=args.seed,
        sampler_backend=args.backend,
    )
    if args.ablate == "no_theta":
        kwargs["lr_theta"] = 0.0
    elif args.ablate == "no_all":
        kwargs["lr_theta"] = 0.0
        kwargs["lr_alpha"] = 0.0
    return BbsConfig(**kwargs)


def cmd_solve(args) -> int:
    try:
        instance = load_instance(args.instance)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: cannot load instance: {exc}", file=sys.stderr)
        return 2
    handle = make_handle(instance)
    m = handle.size
    cfg = _solve_bbs_config(args, m)
    plan = make_plan(m, cfg)
    bound = budget_bound(m, updates=cfg.updates, samples=cfg.samples, tile_plan=plan)
    if args.dry_run:
        dims = [fock_dim(l.modes, int(input_pattern(l.modes).sum())) for l in plan.layouts]
        print(f"budget_bound: {bound}")
        print(f"tile sizes: {[s for _, s in plan.blocks]}")
        print(f"fock dimensions: {dims}")
        return 0
    budget = args.budget if args.budget else bound
    rng = np.random.default_rng(args.seed)
    if args.alg == "bbs":
        result = run_bbs(handle, cfg, rng)
        if args.trace:
            result.trace.write_csv(args.trace)
    elif args.alg == "sa":
        result = simulated_anneal(
            handle, budget, rng, schedule=AnnealSchedule(args.t_max, args.t_min),
            seed=args.seed,
        )
    else:
        result = hill_climb(handle, budget, rng, seed=args.seed)
    payload = result.to_json_dict()
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# bench / ablate
# ---------------------------------------------------------------------------


def _suite_from_args(args, ablation: bool) -> tuple[ExperimentSuite, dict]:
    file_cfg = _load_config_file(args.config) if args.config else {}

    def pick(key, flag_value, default):
        if flag_value is not None:
            return flag_value
        if key in file_cfg:
            return file_cfg[key]
        return default

    preset = HARDWARE_PRESET if getattr(args, "hardware_emulation", False) else {}
    updates = int(pick("updates", args.updates, preset.get("updates", 200)))
    samples = int(pick("samples", args.samples, preset.get("samples", 50)))
    loops = pick("loops", _parse_int_list(args.loops) if args.loops else None,
                 preset.get("loops"))
    tile_size = int(pick("tile_size", args.tile_size, preset.get("tile_size", 0)))
    sizes = _parse_int_list(pick("sizes", args.sizes, "6,10"))
    instances = int(
        pick("instances_per_size", args.instances, preset.get("instances_per_size", 10))
    )
    seed = int(pick("seed", args.seed if args.seed is not None else None, _default_seed()))
    if ablation:
        algorithms = (
            AlgoSpec("bbs"),
            AlgoSpec("bbs", ablation="no_theta"),
            AlgoSpec("bbs", ablation="no_all"),
        )
    else:
        names = pick("algorithms", _split_algs(args.algs), ["bbs", "sa", "hc"])
        algorithms = tuple(AlgoSpec(name) for name in names)
    min_size = min(sizes)
    bbs = BbsConfig(
        updates=updates,
        samples=samples,
        lr_theta=float(pick("lr_theta", args.lr_theta, 0.01)),
        lr_alpha=float(pick("lr_alpha", args.lr_alpha, 0.05)),
        shift=float(pick("shift", args.shift, math.pi / 2)),
        loop_lengths=tuple(loops) if loops else None,
        tile_size=_clamped_tile_size(tile_size, min_size),
        sampler_backend=str(pick("sampler_backend", args.backend, "auto")),
    )
    suite = ExperimentSuite(
        problem=str(pick("problem", args.problem, "knapsack")),
        sizes=sizes,
        instances_per_size=instances,
        algorithms=algorithms,
        bbs=bbs,
        schedule=AnnealSchedule(
            t_max=float(pick("t_max", args.t_max, 25_000.0)),
            t_min=float(pick("t_min", args.t_min, 2.5)),
        ),
        seed_base=seed,
        maneuvers=int(pick("maneuvers", args.maneuvers, 2)),
        conflict_rate=float(pick("conflict_rate", args.conflict_rate, 0.3)),
        capacity_ratio=float(pick("capacity_ratio", args.capacity_ratio, 0.5)),
        keep_traces=bool(pick("traces", args.traces or None, False)),
    )
    extras = {
        "out": pick("out", args.out, "bench_out"),
        "jobs": int(pick("jobs", args.jobs, 1)),
    }
    return suite, extras


def _split_algs(text):
    if text is None:
        return None
    return [v.strip() for v in text.split(",") if v.strip()]


def cmd_bench(args, ablation: bool = False) -> int:
    suite, extras = _suite_from_args(args, ablation)
    if args.dry_run:
        for size in suite.sizes:
            plan = make_plan(size, suite.bbs)
            dims = [
                fock_dim(l.modes, int(input_pattern(l.modes).sum())) for l in plan.layouts
            ]
            print(
                f"size {size}: budget_bound={suite_budget(suite, size)} "
                f"tiles={[s for _, s in plan.blocks]} fock_dims={dims}"
            )
        return 0
    result = run_suite(suite, jobs=extras["jobs"])
    written = emit_report(result, extras["out"])
    print(format_summary_table(result))
    failures = [r for r in result.records if r.error is not None]
    for rec in failures:
        print(f"FAILED {rec.instance_id} [{rec.algorithm}]: {rec.error}", file=sys.stderr)
    print(f"report: {written['summary']}")
    return 0


# ---------------------------------------------------------------------------
# trace re-emission
# ---------------------------------------------------------------------------


def cmd_trace(args) -> int:
    import csv as _csv

    path = Path(args.trace_csv)
    if not path.exists():
        print(f"error: no such trace {path}", file=sys.stderr)
        return 2
    with open(path) as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    p_cols = [i for i, h in enumerate(header) if h.startswith("p_")]
    t_cols = [i for i, h in enumerate(header) if h.startswith("theta_")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "loss.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["step", "loss", "best_cost"])
        for row in rows:
            writer.writerow(row[:3])
    with open(out / "bitflip_probs.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["step"] + [header[i] for i in p_cols])
        for row in rows:
            writer.writerow([row[0]] + [row[i] for i in p_cols])
    with open(out / "angles.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["step"] + [header[i] for i in t_cols])
        for row in rows:
            writer.writerow([row[0]] + [row[i] for i in t_cols])
    print(out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_bbs_flags(parser, seeded=True):
    parser.add_argument("--updates", "-N", type=int, default=None)
    parser.add_argument("--samples", "-S", type=int, default=None)
    parser.add_argument("--lr-theta", type=float, default=None)
    parser.add_argument("--lr-alpha", type=float, default=None)
    parser.add_argument("--shift", type=float, default=None)
    parser.add_argument("--loops", type=str, default=None, help="comma list, e.g. 1,3,9")
    parser.add_argument("--tile-size", type=int, default=None)
    parser.add_argument("--backend", choices=["auto", "statevector", "sequential"], default=None)
    parser.add_argument("--t-max", type=float, default=None)
    parser.add_argument("--t-min", type=float, default=None)
    if seeded:
        parser.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bbs", description="photonic-sampler binary optimization toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate random instance files")
    p_gen.add_argument("kind", choices=["knapsack", "deconfliction", "tsp"])
    p_gen.add_argument("size", type=int)
    p_gen.add_argument("count", type=int)
    p_gen.add_argument("--seed", type=int, default=_default_seed())
    p_gen.add_argument("--out", default="instances")
    p_gen.add_argument("--capacity-ratio", type=float, default=0.5)
    p_gen.add_argument("--maneuvers", type=int, default=2)
    p_gen.add_argument("--conflict-rate", type=float, default=0.3)
    p_gen.set_defaults(func=cmd_gen)

    p_solve = sub.add_parser("solve", help="run one solver on one instance")
    p_solve.add_argument("instance")
    p_solve.add_argument("--alg", choices=["bbs", "sa", "hc"], default="bbs")
    p_solve.add_argument("--ablate", choices=["no_theta", "no_all"], default=None)
    p_solve.add_argument("--budget", type=int, default=None,
                         help="override the matched call budget (sa/hc)")
    p_solve.add_argument("--trace", default=None, help="write the training trace CSV here")
    p_solve.add_argument("--out", default=None, help="write the result JSON here")
    p_solve.add_argument("--dry-run", action="store_true")
    _add_bbs_flags(p_solve, seeded=False)
    p_solve.add_argument("--seed", type=int, default=_default_seed())
    p_solve.set_defaults(func=cmd_solve, updates=200, samples=50)
    p_solve.set_defaults(
        lr_theta=0.01, lr_alpha=0.05, shift=math.pi / 2, tile_size=0, backend="auto",
        t_max=25_000.0, t_min=2.5,
    )

    for name, ablation in (("bench", False), ("ablate", True)):
        p = sub.add_parser(
            name,
            help="run a budget-matched suite" if not ablation
            else "bench with full / no_theta / no_all training modes",
        )
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--problem", choices=["knapsack", "deconfliction", "tsp"], default=None)
        p.add_argument("--sizes", type=str, default=None)
        p.add_argument("--instances", type=int, default=None)
        if not ablation:
            p.add_argument("--algs", type=str, default=None, help="comma list: bbs,sa,hc")
        else:
            p.set_defaults(algs=None)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--traces", action="store_true")
        p.add_argument("--hardware-emulation", action="store_true")
        p.add_argument("--maneuvers", type=int, default=None)
        p.add_argument("--conflict-rate", type=float, default=None)
        p.add_argument("--capacity-ratio", type=float, default=None)
        p.add_argument("--dry-run", action="store_true")
        _add_bbs_flags(p)
        p.set_defaults(func=lambda a, abl=ablation: cmd_bench(a, ablation=abl))

    p_trace = sub.add_parser("trace", help="re-emit plot data from a trace CSV")
    p_trace.add_argument("trace_csv")
    p_trace.add_argument("--out", default="trace_out")
    p_trace.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
