"""Stationary analysis of N-system matching queues with reneging.

Closed-form stationary distributions for the one-sided and two-sided
systems, a truncated-generator numerical oracle, a seeded discrete-event
simulator, and derived performance metrics with parameter sweeps.
"""

from .balance_oracle import (
    TruncatedGenerator,
    build_generator_one_sided,
    build_generator_two_sided,
    check_irreducible,
    solve_stationary,
    total_variation,
    write_generator_csv,
)
from .metrics import (
    MetricsReport,
    compute_metrics,
    lump_side_counts,
    lump_total_supply,
    sweep_flexibility,
)
from .model import (
    EMPTY,
    ONE_SIDED,
    TWO_SIDED,
    BothQueues,
    DivergenceError,
    Empty,
    LeftQueue,
    NSystemParams,
    OneSidedState,
    RightQueue,
    StationaryDistribution,
    Truncation,
    TwoSidedState,
    stability_check,
    validate,
)
from .product_form import (
    FGDecomposition,
    alternative_form_weight,
    f_known,
    fg_decomposition,
    g_total,
    global_balance_residual,
    no_reneging_distribution,
    normalize,
    partial_balance_residual,
    unnormalized_weight_one_sided,
    unnormalized_weight_two_sided,
)
from .simulator import (
    SimConfig,
    SimulationSummary,
    pooled_occupancy,
    run_replications,
    simulate,
    simulate_parsimonious,
    simulate_physical,
)

__version__ = "0.1.0"

__all__ = [
    "BothQueues",
    "DivergenceError",
    "EMPTY",
    "Empty",
    "FGDecomposition",
    "LeftQueue",
    "MetricsReport",
    "NSystemParams",
    "ONE_SIDED",
    "OneSidedState",
    "RightQueue",
    "SimConfig",
    "SimulationSummary",
    "StationaryDistribution",
    "Truncation",
    "TruncatedGenerator",
    "TWO_SIDED",
    "TwoSidedState",
    "alternative_form_weight",
    "build_generator_one_sided",
    "build_generator_two_sided",
    "check_irreducible",
    "compute_metrics",
    "f_known",
    "fg_decomposition",
    "g_total",
    "global_balance_residual",
    "lump_side_counts",
    "lump_total_supply",
    "no_reneging_distribution",
    "normalize",
    "partial_balance_residual",
    "pooled_occupancy",
    "run_replications",
    "simulate",
    "simulate_parsimonious",
    "simulate_physical",
    "solve_stationary",
    "stability_check",
    "sweep_flexibility",
    "total_variation",
    "unnormalized_weight_one_sided",
    "unnormalized_weight_two_sided",
    "validate",
    "write_generator_csv",
]
