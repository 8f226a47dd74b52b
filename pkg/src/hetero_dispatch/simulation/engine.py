"""
Event-driven simulation of a finite two-speed farm.

Arrivals are Poisson with rate lambda k and every job is dispatched on
arrival to one FCFS server. A job's full size is drawn when it is
dispatched, so its departure time (and response time) is known at once;
departures only need to be replayed to keep queue lengths current for the
dispatcher.
"""

import heapq
import logging

from hetero_dispatch.errors import ConfigError
from hetero_dispatch.models import DispatchPolicy, ServiceDistribution, SimReport, SystemConfig
from hetero_dispatch.simulation.policies import FarmView, check_policy, dispatch, query
from hetero_dispatch.simulation.rng import ServiceSampler, spawn_streams
from hetero_dispatch.simulation.stats import batch_means_ci, histogram_bins, unit_clip

logger = logging.getLogger(__name__)

MIN_BATCHES = 20

# Third-over-third growth in mean jobs in system that counts as unstable
GROWTH_THRESHOLD = 1.2


def _grows(thirds: list[float]) -> bool:
    """True if each third exceeds the previous one by more than the growth threshold."""
    return len(thirds) == 3 and all(
        later > GROWTH_THRESHOLD * earlier for earlier, later in zip(thirds, thirds[1:])
    )


class FarmSimulator:
    """One seeded run of a farm under a dispatching policy."""

    def __init__(
        self,
        config: SystemConfig,
        policy: DispatchPolicy,
        service: ServiceDistribution,
        seed: int,
    ):
        if config.num_servers is None:
            raise ConfigError("Simulation needs a finite number of servers (k)")
        check_policy(policy, config)
        self.config = config
        self.policy = policy
        self.seed = seed
        self.k = config.num_servers
        self.k_fast = config.k_fast
        self.view = FarmView(config)
        self.dispatcher, self.server_streams = spawn_streams(seed, self.k)
        # Slow sizes are r times a fast draw
        self.sampler = ServiceSampler(service.scaled_to(1.0 / config.mu_fast))
        self.size_factor = [1.0 if s < self.k_fast else config.speed_ratio for s in range(self.k)]

    def run(self, horizon_arrivals: int, warmup_arrivals: int, batches: int = MIN_BATCHES) -> SimReport:
        """
        Simulate ``horizon_arrivals`` arrivals, discarding statistics of the first ``warmup_arrivals``.

        Raises:
            ConfigError: If the horizon leaves fewer post-warmup arrivals than batches
        """
        observed = horizon_arrivals - warmup_arrivals
        if warmup_arrivals < 0 or observed <= 0:
            raise ConfigError(f"horizon ({horizon_arrivals}) must exceed warmup ({warmup_arrivals})")
        if batches < MIN_BATCHES:
            raise ConfigError(f"At least {MIN_BATCHES} batches are needed, got {batches}")
        if observed < batches:
            raise ConfigError(f"{observed} post-warmup arrivals cannot fill {batches} batches")

        logger.info(
            "Simulating %s: k=%d lambda=%g arrivals=%d warmup=%d seed=%d",
            self.policy.label, self.k, self.config.lam, horizon_arrivals, warmup_arrivals, self.seed,
        )
        k, k_fast = self.k, self.k_fast
        view, lengths = self.view, self.view.lengths
        policy, dispatcher = self.policy, self.dispatcher
        server_streams, sampler, size_factor = self.server_streams, self.sampler, self.size_factor
        arrival_rate = self.config.lam * k

        free_at = [0.0] * k
        departures: list[tuple[float, int]] = []
        observing = False
        t_last = 0.0
        busy = [0, 0]  # busy servers per class (0 fast, 1 slow)
        in_system = 0
        area_busy = [0.0, 0.0]
        area_jobs = 0.0
        hist_area: list[list[float]] = [[0.0], [0.0]]
        last_change = [0.0] * k
        completed = [0, 0]

        batch_sum = [0.0] * batches
        batch_count = [0] * batches
        batch_marks: list[tuple[float, float, float]] = []  # (time, fast busy area, slow busy area)
        third_marks: list[tuple[float, float]] = []  # (time, jobs area)

        def record_level(server: int, now: float) -> None:
            cls = 0 if server < k_fast else 1
            level = lengths[server]
            levels = hist_area[cls]
            while len(levels) <= level:
                levels.append(0.0)
            levels[level] += now - last_change[server]
            last_change[server] = now

        next_arrival = dispatcher.exponential() / arrival_rate
        t_arrival = 0.0
        for a in range(horizon_arrivals):
            t_arrival = next_arrival
            while departures and departures[0][0] <= t_arrival:
                t_dep, server = heapq.heappop(departures)
                cls = 0 if server < k_fast else 1
                if observing:
                    dt = t_dep - t_last
                    area_busy[0] += busy[0] * dt
                    area_busy[1] += busy[1] * dt
                    area_jobs += in_system * dt
                    record_level(server, t_dep)
                    completed[cls] += 1
                t_last = t_dep
                view.depart(server)
                in_system -= 1
                if lengths[server] == 0:
                    busy[cls] -= 1

            if observing:
                dt = t_arrival - t_last
                area_busy[0] += busy[0] * dt
                area_busy[1] += busy[1] * dt
                area_jobs += in_system * dt
            t_last = t_arrival

            j = a - warmup_arrivals
            if j == 0:
                observing = True
                for s in range(k):
                    last_change[s] = t_arrival
            if j >= 0:
                batch = j * batches // observed
                if len(batch_marks) == batch:
                    batch_marks.append((t_arrival, area_busy[0], area_busy[1]))
                if len(third_marks) < 3 and j * 3 >= len(third_marks) * observed:
                    third_marks.append((t_arrival, area_jobs))

            server = dispatch(policy, query(policy, view, dispatcher), dispatcher)
            size = sampler.draw(server_streams[server]) * size_factor[server]
            start = free_at[server] if free_at[server] > t_arrival else t_arrival
            done = start + size
            free_at[server] = done
            heapq.heappush(departures, (done, server))

            cls = 0 if server < k_fast else 1
            if observing:
                record_level(server, t_arrival)
                batch_sum[batch] += done - t_arrival
                batch_count[batch] += 1
            if lengths[server] == 0:
                busy[cls] += 1
            view.arrive(server)
            in_system += 1

            next_arrival = t_arrival + dispatcher.exponential() / arrival_rate

        t_end = t_arrival
        for s in range(k):
            record_level(s, t_end)
        batch_marks.append((t_end, area_busy[0], area_busy[1]))
        third_marks.append((t_end, area_jobs))
        return self._report(
            horizon_arrivals, warmup_arrivals, batch_sum, batch_count, batch_marks, third_marks,
            hist_area, completed,
        )

    def _report(
        self,
        horizon_arrivals: int,
        warmup_arrivals: int,
        batch_sum: list[float],
        batch_count: list[int],
        batch_marks: list[tuple[float, float, float]],
        third_marks: list[tuple[float, float]],
        hist_area: list[list[float]],
        completed: list[int],
    ) -> SimReport:
        k_fast, k_slow = self.config.k_fast, self.config.k_slow
        window = batch_marks[-1][0] - batch_marks[0][0]
        batch_means = [s / c for s, c in zip(batch_sum, batch_count)]
        _, halfwidth = batch_means_ci(batch_means)
        mean_t = sum(batch_sum) / sum(batch_count)

        busy_fast_batches, busy_slow_batches = [], []
        for (t0, f0, s0), (t1, f1, s1) in zip(batch_marks, batch_marks[1:]):
            span = t1 - t0
            if span > 0.0:
                busy_fast_batches.append((f1 - f0) / (span * k_fast))
                busy_slow_batches.append((s1 - s0) / (span * k_slow))
        _, busy_fast_hw = batch_means_ci(busy_fast_batches)
        _, busy_slow_hw = batch_means_ci(busy_slow_batches)

        thirds = [
            (n1 - n0) / (t1 - t0) if t1 > t0 else 0.0
            for (t0, n0), (t1, n1) in zip(third_marks, third_marks[1:])
        ]
        unstable = _grows(thirds)
        if unstable:
            logger.info("%s flagged unstable: mean jobs by third %s", self.policy.label, thirds)

        denom_fast = window * k_fast if window > 0.0 else 1.0
        denom_slow = window * k_slow if window > 0.0 else 1.0
        report = SimReport(
            policy=self.policy.label,
            mean_T=mean_t,
            ci_halfwidth_99=halfwidth,
            busy_fast=unit_clip(batch_marks[-1][1] / denom_fast),
            busy_slow=unit_clip(batch_marks[-1][2] / denom_slow),
            busy_fast_halfwidth_99=busy_fast_hw,
            busy_slow_halfwidth_99=busy_slow_hw,
            hist_fast=histogram_bins([area / denom_fast for area in hist_area[0]]),
            hist_slow=histogram_bins([area / denom_slow for area in hist_area[1]]),
            batch_means=batch_means,
            completed_fast=completed[0],
            completed_slow=completed[1],
            observed_time=window,
            mean_number_by_third=thirds,
            arrivals_processed=horizon_arrivals,
            warmup_discarded=warmup_arrivals,
            seed=self.seed,
            unstable_flag=unstable,
        )
        logger.info("%s: E[T]=%.6g +/- %.3g", self.policy.label, report.mean_T, report.ci_halfwidth_99)
        return report


def run(
    config: SystemConfig,
    policy: DispatchPolicy,
    service: ServiceDistribution | None = None,
    horizon_arrivals: int = 1_000_000,
    warmup_arrivals: int = 100_000,
    seed: int = 0,
    batches: int = MIN_BATCHES,
) -> SimReport:
    """
    Simulate a finite farm and summarize it.

    Args:
        config: System configuration with finite num_servers
        policy: Dispatching rule
        service: Service shape (exponential when None); fast sizes have mean 1/mu_fast
        horizon_arrivals: Total arrivals including warmup
        warmup_arrivals: Leading arrivals excluded from statistics
        seed: Master seed; equal inputs give identical reports
        batches: Number of batch means (at least 20)

    Returns:
        SimReport over the post-warmup arrivals

    Raises:
        ConfigError: For an infinite farm, a policy querying too many servers, or a bad horizon
    """
    simulator = FarmSimulator(config, policy, service or ServiceDistribution(), seed)
    return simulator.run(horizon_arrivals, warmup_arrivals, batches)
