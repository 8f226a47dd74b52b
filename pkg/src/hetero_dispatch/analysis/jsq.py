"""
JSQ-(dF,dS) stationary tails and mean response time.

Setting the derivatives of the mean-field ODEs to zero gives forward
recursions for f_i (fraction of fast servers with at least i jobs) and s_i
(the same for slow servers), started from f_1 = rho_fast and s_1 = rho_slow.
The mean response time conditions on the four ways an arrival can be
placed: idle fast, idle slow, busy fast, busy slow.
"""

import logging
from collections.abc import Callable

from hetero_dispatch.analysis.fixedpoint import fast_queue_weight, rho_fixed_point
from hetero_dispatch.errors import ConditionalUndefined, ConfigError, DivergentTail
from hetero_dispatch.models import (
    PolicyFamily,
    PolicyParams,
    ServerClass,
    SystemConfig,
    TailDistribution,
)
from hetero_dispatch.settings import DEFAULT_SETTINGS, SolverSettings

logger = logging.getLogger(__name__)


def _extend_tail(
    first: float,
    second: float,
    step: Callable[[float, float], float],
    server_class: ServerClass,
    settings: SolverSettings,
) -> TailDistribution:
    """
    Run a tail recursion from (f_1, f_2) until the value drops below tail_tol.

    ``step(f_prev, f_cur)`` returns the next value. Small negative iterates
    clamp to 0; larger ones, or a tail that stops decreasing while still
    above the clamp tolerance, raise DivergentTail.
    """
    tail = [1.0, first]
    if first < settings.tail_tol:
        return TailDistribution(tail=tuple(tail), trunc_tol=settings.tail_tol, server_class=server_class)

    value = second
    while True:
        prev = tail[-1]
        if value < 0.0:
            if value < -settings.clamp_tol:
                raise DivergentTail(
                    f"{server_class.value} tail went negative ({value:.3g}) at i={len(tail)}"
                )
            value = 0.0
        if value >= prev:
            if prev >= settings.clamp_tol:
                raise DivergentTail(
                    f"{server_class.value} tail stopped decaying at i={len(tail)} (value {value:.6g})"
                )
            value = 0.0
        tail.append(value)
        if value < settings.tail_tol:
            break
        if len(tail) > settings.max_tail_length:
            raise DivergentTail(f"{server_class.value} tail longer than {settings.max_tail_length} terms")
        value = step(tail[-2], tail[-1])

    return TailDistribution(tail=tuple(tail), trunc_tol=settings.tail_tol, server_class=server_class)


def fast_tail(
    config: SystemConfig,
    policy: PolicyParams,
    rho: tuple[float, float],
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> TailDistribution:
    """
    Stationary fast-server tail f_0 = 1, f_1 = rho_fast, f_2, ...

    f_2 = f_1 - a (1 - f_1^dF)
    f_(i+1) = f_i - a C (f_(i-1)^dF - f_i^dF),  i >= 2

    with a = lambda / (qF mu_fast) and C the probability that an arrival
    finding all queried fast servers busy still queues at a fast server.

    Raises:
        DivergentTail: If the recursion is inconsistent with ``rho``
    """
    rho_f, rho_s = rho
    d = policy.d_fast
    a = config.lam / (config.q_fast * config.mu_fast)
    ac = a * fast_queue_weight(policy, rho_s)

    def step(prev: float, cur: float) -> float:
        return cur - ac * (prev**d - cur**d)

    second = rho_f - a * (1.0 - rho_f**d)
    return _extend_tail(rho_f, second, step, ServerClass.FAST, settings)


def slow_tail(
    config: SystemConfig,
    policy: PolicyParams,
    rho: tuple[float, float],
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> TailDistribution:
    """
    Stationary slow-server tail s_0 = 1, s_1 = rho_slow, s_2, ...

    s_2 = s_1 - b (1 - s_1^dS) rho_fast^dF pS
    s_(i+1) = s_i - b rho_fast^dF (1 - pF) (s_(i-1)^dS - s_i^dS),  i >= 2

    with b = lambda / (qS mu_slow).
    """
    rho_f, rho_s = rho
    d = policy.d_slow
    b = config.lam / (config.q_slow * config.mu_slow)
    all_fast_busy = rho_f**policy.d_fast
    queue_rate = b * all_fast_busy * (1.0 - policy.p_fast)

    def step(prev: float, cur: float) -> float:
        return cur - queue_rate * (prev**d - cur**d)

    second = rho_s - b * (1.0 - rho_s**d) * all_fast_busy * policy.p_slow
    return _extend_tail(rho_s, second, step, ServerClass.SLOW, settings)


def mean_wait_conditional(
    tail: TailDistribution,
    d: int,
    mu: float,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> float:
    """
    Mean response time of a job that joins the shortest of d busy queried queues.

    (1/mu) sum_(i>=1) (i + 1) (f_i^d - f_(i+1)^d) / f_1^d

    Raises:
        ConditionalUndefined: If no server of this class is busy (f_1 = 0)
    """
    f1 = tail.at(1)
    if f1 <= 0.0:
        raise ConditionalUndefined(f"No busy {tail.server_class.value} servers to condition on")
    norm = f1**d
    total = 0.0
    for i in range(1, settings.conditional_max_terms + 1):
        term = (i + 1) * (tail.at(i) ** d - tail.at(i + 1) ** d) / norm
        total += term
        if i >= len(tail.tail) - 1 and term < settings.conditional_tol:
            break
    else:
        logger.warning(
            "TRUNCATION_CAP_REACHED: %s conditional sum stopped at %d terms",
            tail.server_class.value, settings.conditional_max_terms,
        )
    return total / mu


def branch_probabilities(
    policy: PolicyParams, rho_fast: float, rho_slow: float
) -> tuple[float, float, float, float]:
    """
    Probabilities that an arrival runs on an idle fast, idle slow, busy fast or busy slow server.

    The four values sum to one for every (rho, p) in [0, 1]^4.
    """
    all_fast_busy = rho_fast**policy.d_fast
    all_slow_busy = rho_slow**policy.d_slow
    idle_fast = 1.0 - all_fast_busy
    idle_slow = all_fast_busy * (1.0 - all_slow_busy) * policy.p_slow
    busy_fast = all_fast_busy * (all_slow_busy * policy.p_fast + (1.0 - all_slow_busy) * (1.0 - policy.p_slow))
    busy_slow = all_fast_busy * all_slow_busy * (1.0 - policy.p_fast)
    return idle_fast, idle_slow, busy_fast, busy_slow


def mean_response(
    config: SystemConfig,
    policy: PolicyParams,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> float:
    """
    Mean response time of JSQ-(dF,dS) under exponential service.

    Args:
        config: System configuration with lambda < 1
        policy: JSQ-family policy parameters
        settings: Solver tolerances

    Returns:
        E[T] in the k -> infinity limit

    Raises:
        NoStableFixedPoint: If the busy-fraction equations have no stable solution
        DivergentTail: If a tail recursion diverges
    """
    if policy.family is not PolicyFamily.JSQ:
        raise ConfigError("jsq.mean_response needs a JSQ-family policy")
    fp = rho_fixed_point(config, policy, settings)
    rho = (fp.rho_fast, fp.rho_slow)
    idle_fast, idle_slow, busy_fast, busy_slow = branch_probabilities(policy, *rho)

    et = idle_fast / config.mu_fast + idle_slow / config.mu_slow
    if busy_fast > 0.0:
        tail = fast_tail(config, policy, rho, settings)
        et += busy_fast * mean_wait_conditional(tail, policy.d_fast, config.mu_fast, settings)
    if busy_slow > 0.0:
        tail = slow_tail(config, policy, rho, settings)
        et += busy_slow * mean_wait_conditional(tail, policy.d_slow, config.mu_slow, settings)
    logger.debug("JSQ E[T]=%.10g at rho=(%.6g, %.6g)", et, *rho)
    return et
