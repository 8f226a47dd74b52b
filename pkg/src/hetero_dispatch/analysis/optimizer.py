"""
Optimization of (pF, pS) and the stability predicates.

The objective is cheap and its feasible region has a hard stability
boundary, so the search is a uniform grid followed by local refinement
rather than a gradient method. Infeasible points are kept in the audit
trail with ``et=None``.
"""

import logging
from collections.abc import Callable, Iterable

from hetero_dispatch.analysis import jiq, jsq
from hetero_dispatch.analysis.fixedpoint import rho_fixed_point
from hetero_dispatch.errors import AllInfeasible, ConfigError, InfeasibleParameters
from hetero_dispatch.models import (
    DiagnosticSeverity,
    OptCandidate,
    OptMethod,
    OptResult,
    PolicyFamily,
    PolicyParams,
    ServiceDistribution,
    ServiceKind,
    SolverDiagnostic,
    SystemConfig,
)
from hetero_dispatch.settings import DEFAULT_SETTINGS, SolverSettings

logger = logging.getLogger(__name__)

Objective = Callable[[float, float], float | None]


def evaluate(
    config: SystemConfig,
    params: PolicyParams,
    dist: ServiceDistribution | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> float:
    """
    Mean-field E[T] for one policy point of either family.

    Raises:
        InfeasibleParameters: If the point is unstable
        ConfigError: For JSQ with non-exponential service (not supported analytically)
    """
    if params.family is PolicyFamily.JIQ:
        return jiq.mean_response(config, params, dist, settings)
    if dist is not None and dist.kind is not ServiceKind.EXPONENTIAL:
        raise ConfigError("JSQ-(dF,dS) analysis supports exponential service only")
    return jsq.mean_response(config, params, settings)


def _objective(
    config: SystemConfig,
    family: PolicyFamily,
    d_fast: int,
    d_slow: int,
    dist: ServiceDistribution | None,
    settings: SolverSettings,
) -> Objective:
    grid_settings = settings.model_copy(update={"scan_multiplicity": False})

    def objective(p_fast: float, p_slow: float) -> float | None:
        params = PolicyParams(d_fast=d_fast, d_slow=d_slow, p_fast=p_fast, p_slow=p_slow, family=family)
        try:
            return evaluate(config, params, dist, grid_settings)
        except InfeasibleParameters:
            return None

    return objective


def _select(candidates: Iterable[OptCandidate], tie_tol: float) -> tuple[OptCandidate, int]:
    """
    Best feasible candidate, ties broken toward smaller pS then smaller pF.

    The choice depends only on the set of candidates, never on evaluation order.

    Returns:
        (best candidate, number of candidates tied with it)

    Raises:
        AllInfeasible: If no candidate is feasible
    """
    feasible = [c for c in candidates if c.et is not None]
    if not feasible:
        raise AllInfeasible("No evaluated (pF, pS) point admits a stable fixed point")
    best_et = min(c.et for c in feasible)
    tied = sorted(
        (c for c in feasible if c.et <= best_et * (1.0 + tie_tol)),
        key=lambda c: (c.p_slow, c.p_fast),
    )
    return tied[0], len(tied)


def _axis(center: float, step: float, half_width: int) -> list[float]:
    """Grid points center + j step for |j| <= half_width, clipped to [0, 1]."""
    points = {min(1.0, max(0.0, center + j * step)) for j in range(-half_width, half_width + 1)}
    return sorted(points)


def _grid_refine(
    objective: Objective,
    settings: SolverSettings,
    vary_slow: bool = True,
) -> tuple[list[OptCandidate], OptCandidate, int]:
    """Uniform grid over [0, 1]^2 (or [0, 1] when pS is fixed) plus refinement passes."""
    evaluated: dict[tuple[float, float], OptCandidate] = {}

    def run(p_fast_axis: list[float], p_slow_axis: list[float]) -> None:
        for p_slow in p_slow_axis:
            for p_fast in p_fast_axis:
                key = (p_fast, p_slow)
                if key not in evaluated:
                    evaluated[key] = OptCandidate(p_fast=p_fast, p_slow=p_slow, et=objective(p_fast, p_slow))

    n = round(1.0 / settings.grid_step)
    axis = [i / n for i in range(n + 1)]
    run(axis, axis if vary_slow else [0.0])
    best, ties = _select(evaluated.values(), settings.tie_tol)

    step = 1.0 / n
    for _ in range(settings.refinement_passes):
        half_width = settings.refinement_factor
        step /= settings.refinement_factor
        slow_axis = _axis(best.p_slow, step, half_width) if vary_slow else [0.0]
        run(_axis(best.p_fast, step, half_width), slow_axis)
        best, ties = _select(evaluated.values(), settings.tie_tol)

    return list(evaluated.values()), best, ties


def _result(
    family: PolicyFamily,
    d_fast: int,
    d_slow: int,
    method: OptMethod,
    candidates: list[OptCandidate],
    best: OptCandidate,
    ties: int,
    diagnostics: list[SolverDiagnostic] | None = None,
) -> OptResult:
    diagnostics = list(diagnostics or [])
    if ties > 1:
        diagnostics.append(
            SolverDiagnostic(
                severity=DiagnosticSeverity.INFO,
                code="OPTIMUM_TIE",
                message=f"{ties} points share the optimal E[T]; kept the smallest pS, then smallest pF",
                context={"et": best.et, "ties": float(ties)},
            )
        )
    feasible = sum(1 for c in candidates if c.et is not None)
    return OptResult(
        family=family,
        d_fast=d_fast,
        d_slow=d_slow,
        p_fast_opt=best.p_fast,
        p_slow_opt=best.p_slow,
        et_opt=best.et,
        feasible_fraction=feasible / len(candidates),
        method=method,
        candidates=sorted(candidates, key=lambda c: (c.p_slow, c.p_fast)),
        diagnostics=diagnostics,
    )


def _optimum_diagnostics(
    config: SystemConfig, params: PolicyParams, settings: SolverSettings
) -> list[SolverDiagnostic]:
    """Re-solve the chosen point with the multiplicity scan enabled."""
    try:
        return list(rho_fixed_point(config, params, settings).diagnostics)
    except InfeasibleParameters:
        return []


def optimize(
    config: SystemConfig,
    family: PolicyFamily,
    d_fast: int,
    d_slow: int,
    dist: ServiceDistribution | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> OptResult:
    """
    Minimize mean-field E[T] over (pF, pS) in [0, 1]^2.

    Args:
        config: System configuration with lambda < 1
        family: JIQ or JSQ
        d_fast: Fast servers queried
        d_slow: Slow servers queried
        dist: Service shape for the JIQ objective (exponential when None)
        settings: Grid step, refinement and tolerances

    Returns:
        OptResult with the full audit trail

    Raises:
        AllInfeasible: If no grid point is stable
    """
    config.require_subcritical()
    objective = _objective(config, family, d_fast, d_slow, dist, settings)
    candidates, best, ties = _grid_refine(objective, settings)
    logger.info(
        "%s-(%d,%d) at lambda=%g: pF*=%.6g pS*=%.6g E[T]=%.6g",
        family.value.upper(), d_fast, d_slow, config.lam, best.p_fast, best.p_slow, best.et,
    )
    params = PolicyParams(d_fast=d_fast, d_slow=d_slow, p_fast=best.p_fast, p_slow=best.p_slow, family=family)
    return _result(
        family, d_fast, d_slow, OptMethod.GRID_REFINE, candidates, best, ties,
        _optimum_diagnostics(config, params, settings),
    )


def heuristic_candidates(config: SystemConfig) -> list[tuple[float, float]]:
    """
    The seven (pF, pS) points compared by the heuristic.

    pS = 0 leaves pF immaterial and is represented once with pF = 0; the
    others are {mu_slow qS, 1} x {0, mu_fast qF, 1}.
    """
    fast_share = config.mu_fast * config.q_fast
    slow_share = config.mu_slow * config.q_slow
    points = [(0.0, 0.0)]
    for p_slow in (slow_share, 1.0):
        for p_fast in (0.0, fast_share, 1.0):
            points.append((p_fast, p_slow))
    return points


def heuristic(
    config: SystemConfig,
    family: PolicyFamily,
    d_fast: int,
    d_slow: int,
    dist: ServiceDistribution | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> OptResult:
    """
    Best of the seven heuristic (pF, pS) candidates.

    Raises:
        AllInfeasible: If every candidate is unstable
    """
    config.require_subcritical()
    objective = _objective(config, family, d_fast, d_slow, dist, settings)
    candidates = [
        OptCandidate(p_fast=p_fast, p_slow=p_slow, et=objective(p_fast, p_slow))
        for p_fast, p_slow in heuristic_candidates(config)
    ]
    best, ties = _select(candidates, settings.tie_tol)
    return _result(family, d_fast, d_slow, OptMethod.HEURISTIC, candidates, best, ties)


def relative_gap(heuristic_result: OptResult, optimal_result: OptResult) -> float:
    """Percentage by which the heuristic's E[T] exceeds the optimum."""
    return 100.0 * (heuristic_result.et_opt - optimal_result.et_opt) / optimal_result.et_opt


# =============================================================================
# Single probabilistic choice (d = 1)
# =============================================================================

def split_response(config: SystemConfig, p_fast: float) -> float | None:
    """
    E[T] when each job goes to a random fast server with probability pF, else a random slow one.

    Each class is then a set of independent M/M/1 queues with per-server
    arrival rates lambda pF / qF and lambda (1 - pF) / qS. Returns None if
    either loaded class is unstable.
    """
    et = 0.0
    for share, mu, q in ((p_fast, config.mu_fast, config.q_fast), (1.0 - p_fast, config.mu_slow, config.q_slow)):
        if share == 0.0:
            continue
        gap = mu - config.lam * share / q
        if gap <= 0.0:
            return None
        et += share / gap
    return et


def optimize_split(
    config: SystemConfig,
    family: PolicyFamily = PolicyFamily.JIQ,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> OptResult:
    """
    Optimize the d = 1 policy over pF; pS has no role and is reported as 0.

    With one queried server there is no choice among busy servers, so both
    families collapse to this policy; ``family`` only labels the result.
    """
    config.require_subcritical()
    candidates, best, ties = _grid_refine(lambda p_fast, _p_slow: split_response(config, p_fast), settings, vary_slow=False)
    return _result(family, 0, 0, OptMethod.SPLIT, candidates, best, ties)


def best_split_for_d(
    config: SystemConfig,
    family: PolicyFamily,
    d: int,
    dist: ServiceDistribution | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> OptResult:
    """
    Best (dF, dS) with dF + dS = d and both at least 1, each optimized over (pF, pS).

    d = 1 uses ``optimize_split``. Ties go to the smaller dF.

    Raises:
        ConfigError: If d < 1
        AllInfeasible: If every split is infeasible
    """
    if d < 1:
        raise ConfigError(f"d must be at least 1, got {d}")
    if d == 1:
        return optimize_split(config, family, settings)
    best: OptResult | None = None
    for d_fast in range(1, d):
        try:
            result = optimize(config, family, d_fast, d - d_fast, dist, settings)
        except AllInfeasible:
            logger.debug("(dF,dS)=(%d,%d) is infeasible at lambda=%g", d_fast, d - d_fast, config.lam)
            continue
        if best is None or result.et_opt < best.et_opt * (1.0 - settings.tie_tol):
            best = result
    if best is None:
        raise AllInfeasible(f"No (dF,dS) split of d={d} is stable at lambda={config.lam}")
    return best


# =============================================================================
# Stability predicates
# =============================================================================

def stability_construction(config: SystemConfig) -> tuple[float, float]:
    """(pF, pS) = (mu_fast qF, 1), stable for every lambda < 1."""
    return config.mu_fast * config.q_fast, 1.0


def heavy_traffic_stable(
    config: SystemConfig,
    p_fast: float,
    p_slow: float,
    tol: float = DEFAULT_SETTINGS.heavy_traffic_tol,
) -> bool:
    """
    Heavy-traffic stability condition as lambda -> 1.

    True iff pF equals mu_fast qF (within tol) and pS >= mu_slow qS (within tol);
    any other pF is unstable near full load.
    """
    return (
        abs(p_fast - config.mu_fast * config.q_fast) <= tol
        and p_slow >= config.mu_slow * config.q_slow - tol
    )
