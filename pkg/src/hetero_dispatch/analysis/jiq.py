"""
JIQ-(dF,dS) queue lengths and mean response time.

A tagged server behaves like a state-dependent M/M/1 queue (exponential
service) or, while busy, like an M/G/1 queue with arrival rate lam_busy
(general service), so both results follow from the tagged-server fixed
point of ``fixedpoint.solve_jiq_system``.
"""

import logging

from hetero_dispatch.analysis.fixedpoint import solve_jiq_system
from hetero_dispatch.errors import DivergenceError, NoStableFixedPoint
from hetero_dispatch.models import (
    ClassResponse,
    GeometricQueueDist,
    PolicyParams,
    RhoFixedPoint,
    ServerClass,
    ServiceDistribution,
    ServiceKind,
    SystemConfig,
    second_moment,
)
from hetero_dispatch.settings import DEFAULT_SETTINGS, SolverSettings

logger = logging.getLogger(__name__)


def tagged_queue(config: SystemConfig, fp: RhoFixedPoint, server_class: ServerClass) -> GeometricQueueDist:
    """The state-dependent M/M/1 seen by a tagged fast or slow server."""
    if server_class is ServerClass.FAST:
        return GeometricQueueDist(
            pi0=fp.pi0_fast, lam_idle=fp.lam_idle_fast, lam_busy=fp.lam_busy_fast, mu=config.mu_fast
        )
    return GeometricQueueDist(
        pi0=fp.pi0_slow, lam_idle=fp.lam_idle_slow, lam_busy=fp.lam_busy_slow, mu=config.mu_slow
    )


def queue_pmf(dist: GeometricQueueDist, i: int) -> float:
    """
    P(tagged server holds exactly i jobs).

    pi_i = (lam_idle / mu) (lam_busy / mu)^(i-1) pi0 for i >= 1.
    """
    if i < 0:
        return 0.0
    if i == 0:
        return dist.pi0
    return dist.lam_idle / dist.mu * (dist.lam_busy / dist.mu) ** (i - 1) * dist.pi0


def queue_survival(dist: GeometricQueueDist, i: int) -> float:
    """P(tagged server holds at least i jobs)."""
    if i <= 0:
        return 1.0
    ratio = dist.lam_busy / dist.mu
    return dist.pi0 * dist.lam_idle / dist.mu * ratio ** (i - 1) / (1.0 - ratio)


def pmf_table(dist: GeometricQueueDist, settings: SolverSettings = DEFAULT_SETTINGS) -> list[float]:
    """pmf values pi_0, pi_1, ... up to the first term below the pmf truncation threshold."""
    values = [dist.pi0]
    i = 1
    while True:
        term = queue_pmf(dist, i)
        values.append(term)
        if term < settings.pmf_tol or i >= settings.max_tail_length:
            return values
        i += 1


def _mean_number(lam_idle: float, lam_busy: float, mu: float) -> float:
    gap = mu - lam_busy
    if gap <= 0.0:
        raise DivergenceError(f"lam_busy={lam_busy} is not below mu={mu}")
    return lam_idle * mu / (gap * (gap + lam_idle))


def mean_queue_length(dist: GeometricQueueDist) -> float:
    """E[N] = lam_idle mu / ((mu - lam_busy)(mu - lam_busy + lam_idle))."""
    return _mean_number(dist.lam_idle, dist.lam_busy, dist.mu)


def _require_converged(fp: RhoFixedPoint) -> None:
    if not fp.converged:
        raise NoStableFixedPoint(
            f"Fixed point did not converge (residual {fp.residual:.3g})",
            iterations=fp.iterations,
            residual=fp.residual,
        )


def mean_response_exponential(config: SystemConfig, fp: RhoFixedPoint) -> float:
    """
    Mean response time under exponential service via Little's law.

    E[T] = (qF E[N_F] + qS E[N_S]) / lambda with the tagged-server means.

    Raises:
        NoStableFixedPoint: If ``fp`` did not converge
        DivergenceError: If a tagged queue is unstable
    """
    _require_converged(fp)
    n_fast = _mean_number(fp.lam_idle_fast, fp.lam_busy_fast, config.mu_fast)
    n_slow = _mean_number(fp.lam_idle_slow, fp.lam_busy_slow, config.mu_slow)
    return (config.q_fast * n_fast + config.q_slow * n_slow) / config.lam


def _pollaczek_khinchine(lam_busy: float, dist: ServiceDistribution) -> float:
    """M/G/1 mean response time E[Y] + lam E[Y^2] / (2 (1 - lam E[Y]))."""
    slack = 1.0 - lam_busy * dist.mean
    if slack <= 0.0:
        raise DivergenceError(f"lam_busy * E[Y] = {lam_busy * dist.mean:.6g} is not below 1")
    return lam_busy * second_moment(dist) / (2.0 * slack) + dist.mean


def mean_response_by_class(
    config: SystemConfig,
    fp: RhoFixedPoint,
    dist: ServiceDistribution | None = None,
) -> ClassResponse:
    """
    Per-class mean response times and the share of jobs each class serves.

    The class arrival rate per server is its throughput mu rho, so the
    weights qF mu_fast rho_fast / lambda and qS mu_slow rho_slow / lambda
    sum to one at a fixed point.
    """
    _require_converged(fp)
    shape = dist or ServiceDistribution(kind=ServiceKind.EXPONENTIAL)
    fast = shape.scaled_to(1.0 / config.mu_fast)
    slow = shape.scaled_to(1.0 / config.mu_slow)
    lam_f = config.mu_fast * fp.rho_fast
    lam_s = config.mu_slow * fp.rho_slow
    return ClassResponse(
        t_fast=_pollaczek_khinchine(fp.lam_busy_fast, fast),
        t_slow=_pollaczek_khinchine(fp.lam_busy_slow, slow),
        weight_fast=config.q_fast * lam_f / config.lam,
        weight_slow=config.q_slow * lam_s / config.lam,
    )


def mean_response_general(config: SystemConfig, fp: RhoFixedPoint, dist: ServiceDistribution) -> float:
    """
    Mean response time for a general service shape shared by both classes.

    Fast sizes have mean 1/mu_fast, slow sizes are r times larger. For
    exponential service this equals ``mean_response_exponential``.

    Raises:
        DivergenceError: If a Pollaczek-Khinchine denominator is not positive
    """
    by_class = mean_response_by_class(config, fp, dist)
    return by_class.weight_fast * by_class.t_fast + by_class.weight_slow * by_class.t_slow


def mean_response(
    config: SystemConfig,
    policy: PolicyParams,
    dist: ServiceDistribution | None = None,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> float:
    """Solve the tagged-server system and return E[T] for JIQ-(dF,dS)."""
    fp = solve_jiq_system(config, policy, settings)
    if dist is None or dist.kind is ServiceKind.EXPONENTIAL:
        return mean_response_exponential(config, fp)
    return mean_response_general(config, fp, dist)
