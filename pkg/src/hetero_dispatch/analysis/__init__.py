"""Mean-field analysis of JIQ-(dF,dS) and JSQ-(dF,dS) and the (pF, pS) optimizer."""

# Submodules first: optimizer imports jiq and jsq from this package
from . import fixedpoint, jiq, jsq
from .fixedpoint import (
    query_rate_fast,
    query_rate_slow,
    solve_rho,
    rho_fixed_point,
    solve_jiq_system,
    scan_fixed_points,
    reduced_rho_residual,
)
from .jsq import (
    fast_tail,
    slow_tail,
    mean_wait_conditional,
    branch_probabilities,
)
from .optimizer import (
    evaluate,
    optimize,
    heuristic,
    heuristic_candidates,
    relative_gap,
    optimize_split,
    best_split_for_d,
    stability_construction,
    heavy_traffic_stable,
)

__all__ = [
    "fixedpoint",
    "jiq",
    "jsq",
    # Fixed points
    "query_rate_fast",
    "query_rate_slow",
    "solve_rho",
    "rho_fixed_point",
    "solve_jiq_system",
    "scan_fixed_points",
    "reduced_rho_residual",
    # JSQ tails
    "fast_tail",
    "slow_tail",
    "mean_wait_conditional",
    "branch_probabilities",
    # Optimization and stability
    "evaluate",
    "optimize",
    "heuristic",
    "heuristic_candidates",
    "relative_gap",
    "optimize_split",
    "best_split_for_d",
    "stability_construction",
    "heavy_traffic_stable",
]
