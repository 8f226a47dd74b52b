"""
Exact stationary analysis of small finite farms.

The farm under JIQ-(dF,dS) or JSQ-(dF,dS) with exponential service is a
continuous-time Markov chain on per-server job counts. Servers of the same
class are exchangeable, so states are stored with each class's counts
sorted in decreasing order; this lumping is exact. Queues are truncated at
``cap`` (arrivals routed to a full queue are lost) and the stationary mass
of states touching the cap is reported and bounded.
"""

import logging
from collections import deque
from itertools import combinations
from math import comb

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse
from scipy.sparse import linalg as splinalg

from hetero_dispatch.errors import ConfigError, DispatchAnalysisError, StateSpaceTooLarge, TruncationTooSmall
from hetero_dispatch.models import OracleMetrics, PolicyFamily, PolicyParams, SystemConfig
from hetero_dispatch.settings import DEFAULT_SETTINGS, SolverSettings

logger = logging.getLogger(__name__)

MAX_SERVERS = 8

State = tuple[int, ...]


class CtmcSpec(BaseModel):
    """Reachable lumped states, their generator and the truncation level."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    states: list[State] = Field(description="Fast counts then slow counts, each sorted decreasingly")
    generator: sparse.csr_matrix = Field(description="Rate matrix Q; rows sum to zero")
    cap: int = Field(ge=1, description="Maximum jobs per server")
    k_fast: int = Field(ge=1)
    blocked_rate: np.ndarray = Field(description="Arrival rate lost at the cap, per state")


def _canonical(counts: list[int], k_fast: int) -> State:
    return tuple(sorted(counts[:k_fast], reverse=True)) + tuple(sorted(counts[k_fast:], reverse=True))


def _busy_choice(servers: tuple[int, ...], counts: State, shortest: bool) -> dict[int, float]:
    """Destination probabilities among busy queried servers: uniform, or uniform over the shortest."""
    if shortest:
        best = min(counts[s] for s in servers)
        servers = tuple(s for s in servers if counts[s] == best)
    share = 1.0 / len(servers)
    return {s: share for s in servers}


def dispatch_probabilities(state: State, k_fast: int, policy: PolicyParams) -> dict[int, float]:
    """
    Exact probability that the next arrival joins each server, by enumerating query sets.

    Every (dF-subset of fast, dS-subset of slow) pair is equally likely.
    """
    k = len(state)
    shortest = policy.family is PolicyFamily.JSQ
    subsets_fast = list(combinations(range(k_fast), policy.d_fast))
    subsets_slow = list(combinations(range(k_fast, k), policy.d_slow))
    weight = 1.0 / (len(subsets_fast) * len(subsets_slow))
    probs: dict[int, float] = {}

    def add(choice: dict[int, float], scale: float) -> None:
        for server, p in choice.items():
            probs[server] = probs.get(server, 0.0) + scale * p

    for fast in subsets_fast:
        idle_fast = tuple(s for s in fast if state[s] == 0)
        for slow in subsets_slow:
            if idle_fast:
                add(_busy_choice(idle_fast, state, False), weight)
                continue
            idle_slow = tuple(s for s in slow if state[s] == 0)
            if idle_slow:
                add(_busy_choice(idle_slow, state, False), weight * policy.p_slow)
                add(_busy_choice(fast, state, shortest), weight * (1.0 - policy.p_slow))
            else:
                add(_busy_choice(fast, state, shortest), weight * policy.p_fast)
                add(_busy_choice(slow, state, shortest), weight * (1.0 - policy.p_fast))
    return probs


def _check_inputs(config: SystemConfig, policy: PolicyParams, cap: int, settings: SolverSettings) -> None:
    if config.num_servers is None:
        raise ConfigError("The exact oracle needs a finite number of servers (k)")
    if config.num_servers > MAX_SERVERS:
        raise ConfigError(f"The exact oracle handles at most {MAX_SERVERS} servers, got {config.num_servers}")
    policy.check_against(config)
    if cap < 1:
        raise ConfigError(f"cap must be positive, got {cap}")
    bound = comb(cap + config.k_fast, config.k_fast) * comb(cap + config.k_slow, config.k_slow)
    if bound > settings.max_states:
        raise StateSpaceTooLarge(
            f"Up to {bound} lumped states for k={config.num_servers}, cap={cap} (limit {settings.max_states})"
        )


def build_ctmc(
    config: SystemConfig,
    policy: PolicyParams,
    cap: int,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> CtmcSpec:
    """
    Breadth-first construction of the reachable lumped chain from the empty farm.

    Raises:
        ConfigError: For an infinite or too large farm, or invalid query sizes
        StateSpaceTooLarge: If the state space could exceed ``settings.max_states``
    """
    _check_inputs(config, policy, cap, settings)
    k, k_fast = config.num_servers, config.k_fast
    arrival_rate = config.lam * k
    rates = [config.mu_fast] * k_fast + [config.mu_slow] * (k - k_fast)

    start: State = (0,) * k
    index: dict[State, int] = {start: 0}
    states: list[State] = [start]
    frontier = deque([start])
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    blocked: list[float] = []

    def link(src: int, target: list[int], rate: float) -> None:
        dest_state = _canonical(target, k_fast)
        dest = index.get(dest_state)
        if dest is None:
            dest = index[dest_state] = len(states)
            states.append(dest_state)
            frontier.append(dest_state)
        rows.append(src)
        cols.append(dest)
        vals.append(rate)

    while frontier:
        state = frontier.popleft()
        src = index[state]
        lost = 0.0
        for server, p in dispatch_probabilities(state, k_fast, policy).items():
            if p == 0.0:
                continue
            if state[server] >= cap:
                lost += arrival_rate * p
                continue
            target = list(state)
            target[server] += 1
            link(src, target, arrival_rate * p)
        blocked.append(lost)
        for server in range(k):
            if state[server] > 0:
                target = list(state)
                target[server] -= 1
                link(src, target, rates[server])

    n = len(states)
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    generator = (off - sparse.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    logger.debug("Built CTMC with %d states (k=%d, cap=%d)", n, k, cap)
    return CtmcSpec(
        states=states, generator=generator, cap=cap, k_fast=k_fast, blocked_rate=np.asarray(blocked)
    )


def stationary_distribution(spec: CtmcSpec, settings: SolverSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """
    Solve pi Q = 0 with sum(pi) = 1.

    The last balance equation is replaced by the normalization. Chains up to
    ``settings.direct_solve_limit`` states use a sparse direct solve; larger
    ones use GMRES with an incomplete-LU preconditioner.
    """
    n = len(spec.states)
    system = spec.generator.transpose().tolil()
    system[n - 1, :] = np.ones(n)
    system = system.tocsc()
    rhs = np.zeros(n)
    rhs[n - 1] = 1.0

    if n <= settings.direct_solve_limit:
        pi = splinalg.spsolve(system, rhs)
    else:
        ilu = splinalg.spilu(system, drop_tol=1e-6, fill_factor=20)
        preconditioner = splinalg.LinearOperator((n, n), ilu.solve)
        pi, info = splinalg.gmres(system, rhs, M=preconditioner, rtol=1e-14, atol=0.0, restart=200, maxiter=1000)
        if info != 0:
            raise DispatchAnalysisError(f"GMRES did not converge on {n} states (info={info})")

    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def exact_metrics(
    config: SystemConfig,
    policy: PolicyParams,
    cap: int,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> OracleMetrics:
    """
    Exact E[T], busy fractions and per-class queue-length pmfs of a small farm.

    E[T] follows from Little's law with the accepted arrival rate.

    Raises:
        TruncationTooSmall: If the stationary mass at the cap reaches ``settings.oracle_cap_mass``
        StateSpaceTooLarge: If the chain is too large
    """
    spec = build_ctmc(config, policy, cap, settings)
    pi = stationary_distribution(spec, settings)
    residual = float(np.abs(spec.generator.transpose() @ pi).max())
    if residual >= settings.oracle_residual:
        raise DispatchAnalysisError(f"Stationary residual {residual:.3g} exceeds {settings.oracle_residual:.3g}")

    k, k_fast = config.num_servers, spec.k_fast
    counts = np.asarray(spec.states, dtype=np.int64)
    fast_counts, slow_counts = counts[:, :k_fast], counts[:, k_fast:]

    cap_mass = float(pi[(counts >= cap).any(axis=1)].sum())
    if cap_mass >= settings.oracle_cap_mass:
        raise TruncationTooSmall(
            f"Stationary mass {cap_mass:.3g} at cap={cap} exceeds {settings.oracle_cap_mass:.3g}; raise the cap",
            cap_mass=cap_mass,
        )

    accepted = config.lam * k - float(pi @ spec.blocked_rate)
    mean_jobs = float(pi @ counts.sum(axis=1))
    pmf_fast = [float(pi @ (fast_counts == i).sum(axis=1)) / k_fast for i in range(cap + 1)]
    pmf_slow = [float(pi @ (slow_counts == i).sum(axis=1)) / (k - k_fast) for i in range(cap + 1)]
    return OracleMetrics(
        mean_T=mean_jobs / accepted,
        busy_fast=1.0 - pmf_fast[0],
        busy_slow=1.0 - pmf_slow[0],
        pmf_fast=pmf_fast,
        pmf_slow=pmf_slow,
        cap_mass=cap_mass,
        num_states=len(spec.states),
        residual=residual,
    )
