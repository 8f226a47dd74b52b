"""
Mean-field fixed points for JIQ-(dF,dS) and JSQ-(dF,dS).

Two coupled systems are solved here:

- the busy-fraction equations for (rho_fast, rho_slow), shared by both
  families and independent of the service distribution;
- the six-equation tagged-server system of JIQ-(dF,dS), whose unknowns are
  the idle probabilities and the four state-dependent arrival rates.

Summing the busy-fraction equations weighted by mu q gives the conservation
identity q_fast mu_fast rho_fast + q_slow mu_slow rho_slow = lambda, which
reduces the pair to a scalar equation in rho_fast. That reduction drives the
multiplicity scan and the brentq fallback.
"""

import logging
import math

from scipy.optimize import brentq

from hetero_dispatch.errors import NoStableFixedPoint
from hetero_dispatch.models import (
    DiagnosticSeverity,
    PolicyParams,
    RhoFixedPoint,
    SolverDiagnostic,
    SystemConfig,
)
from hetero_dispatch.settings import DEFAULT_SETTINGS, SolverSettings

logger = logging.getLogger(__name__)

# Keeps reduction endpoints strictly inside [0, 1)
_EDGE = 1e-12


# =============================================================================
# Query and tagged-server arrival rates
# =============================================================================

def query_rate_fast(config: SystemConfig, policy: PolicyParams) -> float:
    """Rate at which arrivals query a tagged fast server: lambda dF / qF."""
    return config.lam * policy.d_fast / config.q_fast


def query_rate_slow(config: SystemConfig, policy: PolicyParams) -> float:
    """Rate at which arrivals query a tagged slow server: lambda dS / qS."""
    return config.lam * policy.d_slow / config.q_slow


def idle_share(d: int, pi0: float) -> float:
    """
    E[1 / (1 + X)] for X ~ Binomial(d - 1, pi0).

    The chance that a queried idle server wins the uniform choice among
    the idle servers of the same query.
    """
    return sum(
        math.comb(d - 1, i) * pi0**i * (1.0 - pi0) ** (d - 1 - i) / (i + 1)
        for i in range(d)
    )


def fast_queue_weight(policy: PolicyParams, rho_slow: float) -> float:
    """
    P(job queues at a busy fast server | all queried fast servers busy).

    C = (1 - rho_slow^dS)(1 - pS) + rho_slow^dS pF
    """
    all_slow_busy = rho_slow**policy.d_slow
    return (1.0 - all_slow_busy) * (1.0 - policy.p_slow) + all_slow_busy * policy.p_fast


def tagged_rates(
    config: SystemConfig,
    policy: PolicyParams,
    pi0_fast: float,
    pi0_slow: float,
) -> tuple[float, float, float, float]:
    """
    Arrival rates to a tagged server given the idle probabilities.

    Returns:
        Tuple (lam_idle_fast, lam_busy_fast, lam_idle_slow, lam_busy_slow)
    """
    lam_qf = query_rate_fast(config, policy)
    lam_qs = query_rate_slow(config, policy)
    busy_f = 1.0 - pi0_fast
    busy_s = 1.0 - pi0_slow
    d_f, d_s = policy.d_fast, policy.d_slow

    lam_if = lam_qf * idle_share(d_f, pi0_fast)
    lam_bf = lam_qf * busy_f ** (d_f - 1) / d_f * fast_queue_weight(policy, busy_s)
    all_fast_busy = busy_f**d_f
    lam_is = lam_qs * all_fast_busy * idle_share(d_s, pi0_slow) * policy.p_slow
    lam_bs = lam_qs * all_fast_busy * busy_s ** (d_s - 1) / d_s * (1.0 - policy.p_fast)
    return lam_if, lam_bf, lam_is, lam_bs


# =============================================================================
# Busy-fraction equations
# =============================================================================

def rho_map(config: SystemConfig, policy: PolicyParams, rho_fast: float, rho_slow: float) -> tuple[float, float]:
    """Right-hand sides of the busy-fraction equations at (rho_fast, rho_slow)."""
    lam = config.lam
    all_fast_busy = rho_fast**policy.d_fast
    all_slow_busy = rho_slow**policy.d_slow
    to_fast = (1.0 - all_fast_busy) + all_fast_busy * fast_queue_weight(policy, rho_slow)
    to_slow = all_fast_busy * ((1.0 - all_slow_busy) * policy.p_slow + all_slow_busy * (1.0 - policy.p_fast))
    return (
        lam / (config.mu_fast * config.q_fast) * to_fast,
        lam / (config.mu_slow * config.q_slow) * to_slow,
    )


def conserved_rho_slow(config: SystemConfig, rho_fast: float) -> float:
    """rho_slow implied by the conservation identity at a given rho_fast."""
    return (config.lam - config.q_fast * config.mu_fast * rho_fast) / (config.q_slow * config.mu_slow)


def reduced_rho_residual(config: SystemConfig, policy: PolicyParams, rho_fast: float) -> float:
    """
    Residual of the fast busy-fraction equation after eliminating rho_slow.

    Zeros of this function inside ``reduction_interval`` are exactly the
    fixed points of the busy-fraction equations in [0, 1)^2.
    """
    rho_slow = conserved_rho_slow(config, rho_fast)
    return rho_fast - rho_map(config, policy, rho_fast, rho_slow)[0]


def reduction_interval(config: SystemConfig) -> tuple[float, float]:
    """Range of rho_fast for which the conserved rho_slow lies in [0, 1) and rho_fast < 1."""
    qmu_f = config.q_fast * config.mu_fast
    lo = max(0.0, (config.lam - config.q_slow * config.mu_slow) / qmu_f)
    if lo > 0.0:
        lo += _EDGE
    hi = min(config.lam / qmu_f, 1.0 - _EDGE)
    return lo, hi


def _max_residual(config: SystemConfig, policy: PolicyParams, rho_fast: float, rho_slow: float) -> float:
    f_f, f_s = rho_map(config, policy, rho_fast, rho_slow)
    return max(abs(f_f - rho_fast), abs(f_s - rho_slow))


def scan_fixed_points(
    config: SystemConfig,
    policy: PolicyParams,
    n: int | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> list[tuple[float, float]]:
    """
    Locate every busy-fraction fixed point in [0, 1)^2 on an n-point scan.

    Sign changes of ``reduced_rho_residual`` are bracketed on a uniform grid
    and each bracket is polished with brentq. Roots closer together than the
    grid spacing are reported once.

    Returns:
        Fixed points (rho_fast, rho_slow) sorted by rho_fast
    """
    n = n or settings.multiplicity_scan_points
    lo, hi = reduction_interval(config)
    if hi <= lo:
        return []

    def g(x: float) -> float:
        return reduced_rho_residual(config, policy, x)

    xs = [lo + (hi - lo) * j / n for j in range(n + 1)]
    gs = [g(x) for x in xs]
    roots: list[float] = []
    for j in range(n + 1):
        if gs[j] == 0.0:
            roots.append(xs[j])
        elif j < n and gs[j] * gs[j + 1] < 0.0:
            roots.append(brentq(g, xs[j], xs[j + 1], xtol=1e-15))

    deduped: list[float] = []
    for root in sorted(roots):
        if not deduped or root - deduped[-1] > (hi - lo) / n:
            deduped.append(root)
    return [(x, max(0.0, conserved_rho_slow(config, x))) for x in deduped]


def _is_stable(config: SystemConfig, policy: PolicyParams, rho_fast: float, rho_slow: float) -> bool:
    _, lam_bf, _, lam_bs = tagged_rates(config, policy, 1.0 - rho_fast, 1.0 - rho_slow)
    return lam_bf < config.mu_fast and lam_bs < config.mu_slow


def _damped_rho_iteration(
    config: SystemConfig,
    policy: PolicyParams,
    settings: SolverSettings,
) -> tuple[float, float, int, bool]:
    """
    Iterate x <- (1 - alpha) x + alpha F(x) from (lambda, lambda).

    Returns:
        (rho_fast, rho_slow, iterations, converged); converged is False when the
        iterate left [0, 1)^2 or the iteration cap was reached.
    """
    alpha = settings.damping
    x_f = x_s = config.lam
    for iteration in range(1, settings.max_iterations + 1):
        f_f, f_s = rho_map(config, policy, x_f, x_s)
        if max(abs(f_f - x_f), abs(f_s - x_s)) < settings.fixed_point_tol:
            return x_f, x_s, iteration, True
        x_f = (1.0 - alpha) * x_f + alpha * f_f
        x_s = (1.0 - alpha) * x_s + alpha * f_s
        if not (0.0 <= x_f < 1.0 and 0.0 <= x_s < 1.0):
            logger.debug("Damped iteration left the unit box after %d steps at (%g, %g)", iteration, x_f, x_s)
            return x_f, x_s, iteration, False
    logger.debug("Damped iteration hit the cap of %d steps", settings.max_iterations)
    return x_f, x_s, settings.max_iterations, False


def _slow_idle_point(config: SystemConfig, policy: PolicyParams) -> RhoFixedPoint:
    """pS = 0: no arrival ever finds a busy slow server, so the slow class stays empty."""
    rho_f = config.lam / (config.mu_fast * config.q_fast)
    if not rho_f < 1.0:
        raise NoStableFixedPoint(
            f"pS=0 routes all work to the fast class, which is overloaded (rho_fast={rho_f:.6g})"
        )
    pi0_f = 1.0 - rho_f
    lam_if, lam_bf, _, _ = tagged_rates(config, policy, pi0_f, 1.0)
    residual = abs(rho_map(config, policy, rho_f, 0.0)[0] - rho_f)
    return RhoFixedPoint(
        rho_fast=rho_f,
        rho_slow=0.0,
        pi0_fast=pi0_f,
        pi0_slow=1.0,
        lam_idle_fast=lam_if,
        lam_busy_fast=lam_bf,
        lam_idle_slow=0.0,
        lam_busy_slow=0.0,
        converged=True,
        iterations=0,
        residual=residual,
        diagnostics=[
            SolverDiagnostic(
                severity=DiagnosticSeverity.INFO,
                code="SLOW_CLASS_IDLE",
                message="pS=0: slow servers never receive work; pF is immaterial",
                context={"rho_fast": rho_f},
            )
        ],
    )


def rho_fixed_point(
    config: SystemConfig,
    policy: PolicyParams,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> RhoFixedPoint:
    """
    Solve the busy-fraction equations and package the result.

    Idle probabilities are pi0 = 1 - rho and the tagged-server rates are
    evaluated at those values.

    Args:
        config: System configuration with lambda < 1
        policy: Policy parameters (either family)
        settings: Solver tolerances

    Returns:
        RhoFixedPoint at the busy-fraction level

    Raises:
        ConfigError: If lambda >= 1
        NoStableFixedPoint: If no stable fixed point exists in [0, 1)^2
    """
    config.require_subcritical()
    if policy.p_slow == 0.0:
        return _slow_idle_point(config, policy)

    diagnostics: list[SolverDiagnostic] = []
    rho_f, rho_s, iterations, converged = _damped_rho_iteration(config, policy, settings)

    if not converged:
        candidates = [
            point for point in scan_fixed_points(config, policy, settings=settings)
            if _is_stable(config, policy, *point)
        ]
        if not candidates:
            raise NoStableFixedPoint(
                f"No stable busy-fraction fixed point for lambda={config.lam}, "
                f"(dF,dS)=({policy.d_fast},{policy.d_slow}), pF={policy.p_fast}, pS={policy.p_slow}",
                iterations=iterations,
                residual=_max_residual(config, policy, min(rho_f, 1.0), min(rho_s, 1.0)),
            )
        rho_f, rho_s = candidates[0]
        diagnostics.append(
            SolverDiagnostic(
                severity=DiagnosticSeverity.WARNING,
                code="FALLBACK_ROOT_FINDER",
                message="Damped iteration did not converge; used brentq on the conserved reduction",
                context={"iterations": float(iterations), "rho_fast": rho_f},
            )
        )
        logger.debug("Fallback root finder returned rho=(%g, %g)", rho_f, rho_s)
    elif settings.scan_multiplicity:
        roots = scan_fixed_points(config, policy, settings=settings)
        if len(roots) > 1:
            diagnostics.append(
                SolverDiagnostic(
                    severity=DiagnosticSeverity.WARNING,
                    code="MULTIPLE_FIXED_POINTS",
                    message=f"{len(roots)} busy-fraction fixed points found; returning the damped-iteration limit",
                    context={f"rho_fast_{i}": root[0] for i, root in enumerate(roots)},
                )
            )

    pi0_f, pi0_s = 1.0 - rho_f, 1.0 - rho_s
    lam_if, lam_bf, lam_is, lam_bs = tagged_rates(config, policy, pi0_f, pi0_s)
    if not (lam_bf < config.mu_fast and lam_bs < config.mu_slow):
        raise NoStableFixedPoint(
            f"Fixed point ({rho_f:.6g}, {rho_s:.6g}) has an unstable tagged queue "
            f"(lam_busy_fast={lam_bf:.6g} vs {config.mu_fast:.6g}, lam_busy_slow={lam_bs:.6g} vs {config.mu_slow:.6g})",
            iterations=iterations,
        )
    residual = _max_residual(config, policy, rho_f, rho_s)
    logger.debug("rho=(%.12g, %.12g) after %d iterations, residual %.3g", rho_f, rho_s, iterations, residual)
    return RhoFixedPoint(
        rho_fast=rho_f,
        rho_slow=rho_s,
        pi0_fast=pi0_f,
        pi0_slow=pi0_s,
        lam_idle_fast=lam_if,
        lam_busy_fast=lam_bf,
        lam_idle_slow=lam_is,
        lam_busy_slow=lam_bs,
        converged=residual < (settings.fixed_point_tol if converged else settings.fallback_tol),
        iterations=iterations,
        residual=residual,
        diagnostics=diagnostics,
    )


def solve_rho(
    config: SystemConfig,
    policy: PolicyParams,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> tuple[float, float]:
    """
    Busy fractions (rho_fast, rho_slow) of the mean-field system.

    Raises:
        NoStableFixedPoint: If the parameter combination is unstable
    """
    fp = rho_fixed_point(config, policy, settings)
    return fp.rho_fast, fp.rho_slow


# =============================================================================
# JIQ tagged-server system
# =============================================================================

def _idle_probabilities(
    config: SystemConfig, rates: tuple[float, float, float, float]
) -> tuple[float, float]:
    """pi0 = (mu - lam_busy) / (mu - lam_busy + lam_idle) for each class."""
    lam_if, lam_bf, lam_is, lam_bs = rates
    pi0_f = (config.mu_fast - lam_bf) / (config.mu_fast - lam_bf + lam_if)
    pi0_s = (config.mu_slow - lam_bs) / (config.mu_slow - lam_bs + lam_is)
    return pi0_f, pi0_s


def jiq_residual(config: SystemConfig, policy: PolicyParams, fp: RhoFixedPoint) -> float:
    """Max-norm residual of the six tagged-server equations at ``fp``."""
    rates = tagged_rates(config, policy, fp.pi0_fast, fp.pi0_slow)
    pi0_f, pi0_s = _idle_probabilities(config, rates)
    given = (fp.lam_idle_fast, fp.lam_busy_fast, fp.lam_idle_slow, fp.lam_busy_slow)
    return max(
        abs(pi0_f - fp.pi0_fast),
        abs(pi0_s - fp.pi0_slow),
        *(abs(a - b) for a, b in zip(rates, given)),
    )


def solve_jiq_system(
    config: SystemConfig,
    policy: PolicyParams,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> RhoFixedPoint:
    """
    Solve the six tagged-server equations of JIQ-(dF,dS).

    The unknowns are (pi0_fast, pi0_slow) and the four arrival rates; the
    rates are explicit in the idle probabilities, so damped iteration runs
    on the two idle probabilities starting from (1 - lambda, 1 - lambda).
    If it leaves (0, 1]^2, meets an unstable tagged queue or hits the cap,
    the busy-fraction solution is used instead (the two systems share fixed
    points with pi0 = 1 - rho).

    Args:
        config: System configuration with lambda < 1
        policy: Policy parameters; the busy-server rule does not enter these equations
        settings: Solver tolerances

    Returns:
        RhoFixedPoint at the tagged-server level, rho = 1 - pi0

    Raises:
        NoStableFixedPoint: If no stable solution exists
    """
    config.require_subcritical()
    if policy.p_slow == 0.0:
        return _slow_idle_point(config, policy)

    alpha = settings.damping
    pi0_f = pi0_s = 1.0 - config.lam
    converged = False
    iteration = 0
    for iteration in range(1, settings.max_iterations + 1):
        rates = tagged_rates(config, policy, pi0_f, pi0_s)
        if rates[1] >= config.mu_fast or rates[3] >= config.mu_slow:
            break
        g_f, g_s = _idle_probabilities(config, rates)
        if max(abs(g_f - pi0_f), abs(g_s - pi0_s)) < settings.fixed_point_tol:
            converged = True
            break
        pi0_f = (1.0 - alpha) * pi0_f + alpha * g_f
        pi0_s = (1.0 - alpha) * pi0_s + alpha * g_s
        if not (0.0 < pi0_f <= 1.0 and 0.0 < pi0_s <= 1.0):
            break

    diagnostics: list[SolverDiagnostic] = []
    if not converged:
        fallback = rho_fixed_point(config, policy, settings)
        pi0_f, pi0_s = fallback.pi0_fast, fallback.pi0_slow
        diagnostics = list(fallback.diagnostics)
        diagnostics.append(
            SolverDiagnostic(
                severity=DiagnosticSeverity.WARNING,
                code="FALLBACK_ROOT_FINDER",
                message="Tagged-server iteration did not converge; seeded from the busy-fraction solution",
                context={"iterations": float(iteration)},
            )
        )
        logger.debug("JIQ tagged iteration fell back after %d steps", iteration)

    lam_if, lam_bf, lam_is, lam_bs = tagged_rates(config, policy, pi0_f, pi0_s)
    if not (lam_bf < config.mu_fast and lam_bs < config.mu_slow):
        raise NoStableFixedPoint(
            f"Tagged queue unstable at pi0=({pi0_f:.6g}, {pi0_s:.6g})",
            iterations=iteration,
        )
    fp = RhoFixedPoint(
        rho_fast=1.0 - pi0_f,
        rho_slow=1.0 - pi0_s,
        pi0_fast=pi0_f,
        pi0_slow=pi0_s,
        lam_idle_fast=lam_if,
        lam_busy_fast=lam_bf,
        lam_idle_slow=lam_is,
        lam_busy_slow=lam_bs,
        converged=True,
        iterations=iteration,
        residual=0.0,
        diagnostics=diagnostics,
    )
    residual = jiq_residual(config, policy, fp)
    tol = settings.fixed_point_tol if converged else settings.fallback_tol
    return fp.model_copy(update={"residual": residual, "converged": residual < tol})
