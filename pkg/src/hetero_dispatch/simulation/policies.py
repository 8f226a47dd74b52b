"""
Dispatching rules for the finite-k simulator.

Servers 0 .. k_fast-1 are fast and k_fast .. k-1 are slow. Each arrival is
handled in two steps: ``query`` picks the servers the dispatcher looks at
and reads their queue lengths into a ``Snapshot``; ``dispatch`` picks the
destination among them. All ties are broken uniformly at random with the
dispatcher stream.
"""

from typing import NamedTuple

from hetero_dispatch.errors import ConfigError
from hetero_dispatch.models import DispatchPolicy, PolicyKind, SystemConfig
from hetero_dispatch.simulation.rng import BufferedStream


class FarmView:
    """Queue lengths plus the idle-server list maintained for global JIQ."""

    __slots__ = ("k", "k_fast", "mu_fast", "mu_slow", "lengths", "idle", "_idle_pos")

    def __init__(self, config: SystemConfig):
        self.k = config.num_servers
        self.k_fast = config.k_fast
        self.mu_fast = config.mu_fast
        self.mu_slow = config.mu_slow
        self.lengths = [0] * self.k
        self.idle = list(range(self.k))
        self._idle_pos = list(range(self.k))

    def is_fast(self, server: int) -> bool:
        return server < self.k_fast

    def rate(self, server: int) -> float:
        return self.mu_fast if server < self.k_fast else self.mu_slow

    def arrive(self, server: int) -> None:
        if self.lengths[server] == 0:
            pos = self._idle_pos[server]
            last = self.idle.pop()
            if last != server:
                self.idle[pos] = last
                self._idle_pos[last] = pos
            self._idle_pos[server] = -1
        self.lengths[server] += 1

    def depart(self, server: int) -> None:
        self.lengths[server] -= 1
        if self.lengths[server] == 0:
            self._idle_pos[server] = len(self.idle)
            self.idle.append(server)


class Snapshot(NamedTuple):
    """Queue lengths of exactly the queried servers, split by class."""
    fast: list[tuple[int, int]]  # (server id, jobs)
    slow: list[tuple[int, int]]
    mu_fast: float
    mu_slow: float


def check_policy(policy: DispatchPolicy, config: SystemConfig) -> None:
    """Raise ConfigError if the policy queries more servers than exist."""
    if policy.kind in (PolicyKind.JIQ_DFDS, PolicyKind.JSQ_DFDS):
        if policy.d_fast > config.k_fast or policy.d_slow > config.k_slow:
            raise ConfigError(
                f"(dF,dS)=({policy.d_fast},{policy.d_slow}) exceeds the class sizes "
                f"({config.k_fast},{config.k_slow})"
            )
    elif policy.d is not None and policy.d > config.num_servers:
        raise ConfigError(f"d={policy.d} exceeds the {config.num_servers} servers")


def _split(view: FarmView, servers: list[int]) -> Snapshot:
    fast = [(s, view.lengths[s]) for s in servers if s < view.k_fast]
    slow = [(s, view.lengths[s]) for s in servers if s >= view.k_fast]
    return Snapshot(fast, slow, view.mu_fast, view.mu_slow)


def _weighted_query(view: FarmView, d: int, stream: BufferedStream) -> list[int]:
    """d servers drawn one at a time with probability proportional to speed among those not yet drawn."""
    chosen: list[int] = []
    fast_left, slow_left = view.k_fast, view.k - view.k_fast
    for _ in range(d):
        weight_fast = fast_left * view.mu_fast
        take_fast = stream.random() * (weight_fast + slow_left * view.mu_slow) < weight_fast
        if take_fast:
            lo, hi = 0, view.k_fast
            fast_left -= 1
        else:
            lo, hi = view.k_fast, view.k
            slow_left -= 1
        while True:
            server = lo + stream.below(hi - lo)
            if server not in chosen:
                chosen.append(server)
                break
    return chosen


def query(policy: DispatchPolicy, view: FarmView, stream: BufferedStream) -> Snapshot:
    """Choose the servers an arrival inspects and read their queue lengths."""
    match policy.kind:
        case PolicyKind.JIQ_DFDS | PolicyKind.JSQ_DFDS:
            fast = stream.sample(view.k_fast, policy.d_fast)
            slow = [view.k_fast + s for s in stream.sample(view.k - view.k_fast, policy.d_slow)]
            return Snapshot(
                [(s, view.lengths[s]) for s in fast],
                [(s, view.lengths[s]) for s in slow],
                view.mu_fast,
                view.mu_slow,
            )
        case PolicyKind.JSQ_D | PolicyKind.SED_D:
            return _split(view, stream.sample(view.k, policy.d))
        case PolicyKind.WJSQ_D:
            return _split(view, _weighted_query(view, policy.d, stream))
        case PolicyKind.JIQ_GLOBAL:
            server = stream.choice(view.idle) if view.idle else stream.below(view.k)
            return _split(view, [server])
        case PolicyKind.RANDOM:
            if policy.split_p_fast is None:
                return _split(view, [stream.below(view.k)])
            if stream.random() < policy.split_p_fast:
                return _split(view, [stream.below(view.k_fast)])
            return _split(view, [view.k_fast + stream.below(view.k - view.k_fast)])
    raise ConfigError(f"Unhandled policy kind {policy.kind}")


def _uniform(servers: list[tuple[int, int]], stream: BufferedStream) -> int:
    return servers[stream.below(len(servers))][0]


def _argmin(servers: list[tuple[int, float]], stream: BufferedStream) -> int:
    """Server with the smallest key, ties uniform."""
    best = min(key for _, key in servers)
    tied = [server for server, key in servers if key == best]
    return tied[0] if len(tied) == 1 else tied[stream.below(len(tied))]


def _busy_choice(servers: list[tuple[int, int]], shortest: bool, stream: BufferedStream) -> int:
    return _argmin(servers, stream) if shortest else _uniform(servers, stream)


def dispatch(policy: DispatchPolicy, snapshot: Snapshot, stream: BufferedStream) -> int:
    """
    Destination server for one arrival.

    For the (dF, dS) families: an idle queried fast server if any; otherwise,
    with probability pS, an idle queried slow server if any; otherwise the
    job queues at a fast server with probability pF (or 1 - pS when an idle
    slow server was passed over) and at a slow server otherwise. The busy
    server is uniform (JIQ) or the shortest queue (JSQ).
    """
    kind = policy.kind
    if kind in (PolicyKind.JIQ_DFDS, PolicyKind.JSQ_DFDS):
        shortest = kind is PolicyKind.JSQ_DFDS
        idle_fast = [entry for entry in snapshot.fast if entry[1] == 0]
        if idle_fast:
            return _uniform(idle_fast, stream)
        idle_slow = [entry for entry in snapshot.slow if entry[1] == 0]
        if idle_slow:
            if stream.random() < policy.p_slow:
                return _uniform(idle_slow, stream)
            return _busy_choice(snapshot.fast, shortest, stream)
        if stream.random() < policy.p_fast:
            return _busy_choice(snapshot.fast, shortest, stream)
        return _busy_choice(snapshot.slow, shortest, stream)

    queried = snapshot.fast + snapshot.slow
    if kind is PolicyKind.SED_D:
        keyed = [(s, (n + 1) / snapshot.mu_fast) for s, n in snapshot.fast]
        keyed += [(s, (n + 1) / snapshot.mu_slow) for s, n in snapshot.slow]
        return _argmin(keyed, stream)
    if kind in (PolicyKind.JSQ_D, PolicyKind.WJSQ_D):
        return _argmin(queried, stream)
    # JIQ_GLOBAL and RANDOM make their choice while querying
    return queried[0][0]
