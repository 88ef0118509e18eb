"""Variational photonic binary optimizer toolkit."""

from .interferometer import (
    CircuitLayout,
    build_layout,
    circuit_unitary,
    coupler_unitary,
    default_loop_lengths,
    input_pattern,
)
from .fock import (
    FockDimensionError,
    FockStateVector,
    evolve,
    fock_dim,
    output_distribution,
)
from .sampling import sample_threshold, threshold_pattern
from .permanents import permanent, pattern_probability
from .engine import (
    BbsConfig,
    BbsParams,
    BbsResult,
    EvalLedger,
    TrainingTrace,
    apply_bitflips,
    budget_bound,
    grad_alpha,
    grad_theta,
    init_params,
    make_tiles,
    run_bbs,
    sgd_update,
)
from .problems import (
    CostFunctionHandle,
    DeconflictionInstance,
    KnapsackInstance,
    TspInstance,
    brute_force,
    decode_permutation,
    gen_deconfliction,
    gen_knapsack,
    gen_tsp,
    load_instance,
    make_handle,
    save_instance,
)
from .baselines import AnnealSchedule, BaselineResult, hill_climb, simulated_anneal
from .bench import (
    AlgoSpec,
    ExperimentSuite,
    emit_report,
    overlap_analysis,
    relative_error,
    run_suite,
)

__all__ = [
    "AlgoSpec",
    "AnnealSchedule",
    "BaselineResult",
    "BbsConfig",
    "BbsParams",
    "BbsResult",
    "CostFunctionHandle",
    "DeconflictionInstance",
    "EvalLedger",
    "ExperimentSuite",
    "KnapsackInstance",
    "TrainingTrace",
    "TspInstance",
    "apply_bitflips",
    "brute_force",
    "budget_bound",
    "decode_permutation",
    "emit_report",
    "gen_deconfliction",
    "gen_knapsack",
    "gen_tsp",
    "grad_alpha",
    "grad_theta",
    "hill_climb",
    "init_params",
    "load_instance",
    "make_handle",
    "make_tiles",
    "overlap_analysis",
    "relative_error",
    "run_bbs",
    "run_suite",
    "save_instance",
    "sgd_update",
    "simulated_anneal",
    "CircuitLayout",
    "FockDimensionError",
    "FockStateVector",
    "build_layout",
    "circuit_unitary",
    "coupler_unitary",
    "default_loop_lengths",
    "evolve",
    "fock_dim",
    "input_pattern",
    "output_distribution",
    "pattern_probability",
    "permanent",
    "sample_threshold",
    "threshold_pattern",
]
