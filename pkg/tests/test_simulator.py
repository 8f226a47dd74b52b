"""Tests for the seeded farm simulator."""

import pytest

from hetero_dispatch.analysis import (
    evaluate,
    jiq,
    jsq,
    optimize,
    rho_fixed_point,
    solve_jiq_system,
    stability_construction,
)
from hetero_dispatch.errors import ConfigError
from hetero_dispatch.models import (
    DispatchPolicy,
    PolicyFamily,
    PolicyKind,
    PolicyParams,
    ServerClass,
    ServiceDistribution,
    ServiceKind,
    SimReport,
    SystemConfig,
)
from hetero_dispatch.oracle import exact_metrics
from hetero_dispatch.settings import SolverSettings
from hetero_dispatch.simulation import FarmSimulator, run


def _config(lam: float, q_fast: float = 0.5, r: float = 10.0, k: int | None = 2) -> SystemConfig:
    return SystemConfig(lam=lam, q_fast=q_fast, speed_ratio=r, num_servers=k)


FAST_ONLY = DispatchPolicy(kind=PolicyKind.JIQ_DFDS, d_fast=1, d_slow=1, p_fast=1.0, p_slow=0.0)


class TestRunValidation:
    """Test argument checks before any event is simulated."""

    def test_infinite_farm(self):
        """Simulation needs a finite k."""
        with pytest.raises(ConfigError):
            run(_config(0.5, k=None), FAST_ONLY, horizon_arrivals=1000, warmup_arrivals=100)

    def test_horizon_not_beyond_warmup(self):
        """horizon <= warmup is refused."""
        with pytest.raises(ConfigError):
            run(_config(0.5), FAST_ONLY, horizon_arrivals=100, warmup_arrivals=100)

    def test_too_few_batches(self):
        """Fewer than 20 batches is refused."""
        with pytest.raises(ConfigError):
            run(_config(0.5), FAST_ONLY, horizon_arrivals=1000, warmup_arrivals=100, batches=10)

    def test_batches_larger_than_sample(self):
        """Every batch needs at least one post-warmup arrival."""
        with pytest.raises(ConfigError):
            run(_config(0.5), FAST_ONLY, horizon_arrivals=110, warmup_arrivals=100)

    def test_policy_too_wide(self):
        """A query larger than a class is refused at construction."""
        policy = DispatchPolicy(kind=PolicyKind.JSQ_DFDS, d_fast=2, d_slow=1, p_fast=1.0, p_slow=1.0)
        with pytest.raises(ConfigError):
            FarmSimulator(_config(0.5), policy, ServiceDistribution(), seed=0)


class TestDeterminism:
    """Test seeded reproducibility."""

    def test_same_seed_same_report(self):
        """Equal inputs give identical reports."""
        policy = DispatchPolicy(kind=PolicyKind.JSQ_DFDS, d_fast=2, d_slow=2, p_fast=0.8, p_slow=0.6)
        config = _config(0.6, r=3.0, k=6)
        first = run(config, policy, horizon_arrivals=20_000, warmup_arrivals=2_000, seed=3)
        second = run(config, policy, horizon_arrivals=20_000, warmup_arrivals=2_000, seed=3)
        assert first == second

    def test_different_seed_differs(self):
        """Another seed gives another sample path."""
        config = _config(0.6, r=3.0, k=6)
        policy = DispatchPolicy(kind=PolicyKind.SED_D, d=2)
        first = run(config, policy, horizon_arrivals=20_000, warmup_arrivals=2_000, seed=1)
        second = run(config, policy, horizon_arrivals=20_000, warmup_arrivals=2_000, seed=2)
        assert first.mean_T != second.mean_T


class TestReport:
    """Test the contents of a report."""

    @pytest.fixture(scope="class")
    def report(self):
        return run(_config(0.2), FAST_ONLY, horizon_arrivals=40_000, warmup_arrivals=4_000, seed=11)

    def test_bookkeeping(self, report):
        """Arrival counts, seed and batch count are recorded."""
        assert report.arrivals_processed == 40_000
        assert report.warmup_discarded == 4_000
        assert report.seed == 11
        assert len(report.batch_means) == 20
        assert report.policy == "JIQ-(1,1)"

    def test_slow_server_unused(self, report):
        """pS = 0 with one fast server never sends work to the slow one."""
        assert report.busy_slow == 0.0
        assert report.completed_slow == 0
        assert report.completed_fast > 0

    def test_histograms_normalized(self, report):
        """Per-class time fractions sum to 1 and P(N >= 0) = 1."""
        for hist in (report.hist_fast, report.hist_slow):
            assert sum(b.frac_exactly for b in hist) == pytest.approx(1.0, abs=1e-9)
            assert hist[0].frac_at_least == pytest.approx(1.0)
        assert 1.0 - report.hist_fast[0].frac_exactly == pytest.approx(report.busy_fast, abs=1e-9)

    def test_stable_run_not_flagged(self, report):
        """A lightly loaded farm is not flagged unstable."""
        assert not report.unstable_flag
        assert len(report.mean_number_by_third) == 3


class TestInstability:
    """Test the growth heuristic."""

    def test_overloaded_class_flagged(self):
        """Sending everything to a slow server at high load grows the system."""
        policy = DispatchPolicy(kind=PolicyKind.RANDOM, split_p_fast=0.0)
        report = run(_config(0.95), policy, horizon_arrivals=30_000, warmup_arrivals=1_000, seed=0)
        assert report.unstable_flag
        assert report.busy_fast == 0.0


@pytest.mark.slow
class TestAgainstExactValues:
    """Test long runs against closed forms and the exact chain."""

    def test_mm1_response(self):
        """One fast server fed everything is an M/M/1: E[T] = 0.70513, busy 0.22."""
        report = run(_config(0.2), FAST_ONLY, horizon_arrivals=200_000, warmup_arrivals=20_000, seed=5)
        assert report.mean_T == pytest.approx(0.70513, rel=0.03)
        assert report.busy_fast == pytest.approx(0.22, abs=0.01)

    # (k, lambda, r, family, dF, dS, pF, pS, cap)
    SMALL_FARMS = [
        (4, 0.3, 2.0, PolicyFamily.JSQ, 2, 2, 0.8, 0.6, 15),
        (4, 0.25, 2.0, PolicyFamily.JSQ, 2, 2, 1.0, 1.0, 15),
        (2, 0.3, 2.0, PolicyFamily.JIQ, 1, 1, 0.5, 0.5, 60),
        (2, 0.4, 2.0, PolicyFamily.JSQ, 1, 1, 0.5, 0.5, 60),
        (2, 0.35, 4.0, PolicyFamily.JIQ, 1, 1, 0.9, 1.0, 60),
    ]

    @pytest.mark.parametrize("k, lam, r, family, d_fast, d_slow, p_fast, p_slow, cap", SMALL_FARMS)
    def test_matches_oracle(self, k, lam, r, family, d_fast, d_slow, p_fast, p_slow, cap):
        """Small farms agree with the exact Markov chain within the run's 99% interval."""
        config = _config(lam, r=r, k=k)
        params = PolicyParams(d_fast=d_fast, d_slow=d_slow, p_fast=p_fast, p_slow=p_slow, family=family)
        exact = exact_metrics(config, params, cap=cap)
        report = run(
            config, DispatchPolicy.from_params(params), horizon_arrivals=1_000_000, warmup_arrivals=100_000, seed=7
        )
        assert abs(report.mean_T - exact.mean_T) <= report.ci_halfwidth_99
        assert report.busy_fast == pytest.approx(exact.busy_fast, abs=0.01)
        assert report.busy_slow == pytest.approx(exact.busy_slow, abs=0.01)


LARGE_FARM = 1000


def _optimized_run(family: PolicyFamily) -> tuple[PolicyParams, SimReport]:
    """Mean-field optimum of (2,2) at lambda = 0.74, qF = 0.5, r = 10, simulated on 1000 servers."""
    config = _config(0.74, k=LARGE_FARM)
    result = optimize(config.with_servers(None), family, 2, 2, settings=SolverSettings(grid_step=1 / 32))
    params = PolicyParams(d_fast=2, d_slow=2, p_fast=result.p_fast_opt, p_slow=result.p_slow_opt, family=family)
    report = run(config, DispatchPolicy.from_params(params), seed=13)
    return params, report


@pytest.mark.slow
class TestLargeFarmJIQ:
    """Test a 1000-server JIQ-(2,2) farm against the mean-field values."""

    @pytest.fixture(scope="class")
    def outcome(self):
        params, report = _optimized_run(PolicyFamily.JIQ)
        config = _config(0.74, k=None)
        return config, solve_jiq_system(config, params), params, report

    def test_mean_response(self, outcome):
        """Simulated E[T] is within 2% of the mean-field value."""
        config, _, params, report = outcome
        assert report.mean_T == pytest.approx(evaluate(config, params), rel=0.02)

    def test_fast_busy_fraction(self, outcome):
        """The fast busy fraction matches 1 - pi0 of the fast class."""
        _, fp, _, report = outcome
        assert report.busy_fast == pytest.approx(fp.rho_fast, abs=0.01)

    def test_fast_queue_pmf(self, outcome):
        """The fast queue-length pmf matches the simulated histogram."""
        config, fp, _, report = outcome
        dist = jiq.tagged_queue(config, fp, ServerClass.FAST)
        for i in range(3):
            assert report.hist_fast[i].frac_exactly == pytest.approx(jiq.queue_pmf(dist, i), abs=0.01)


@pytest.mark.slow
class TestLargeFarmJSQ:
    """Test a 1000-server JSQ-(2,2) farm against the mean-field values."""

    @pytest.fixture(scope="class")
    def outcome(self):
        params, report = _optimized_run(PolicyFamily.JSQ)
        config = _config(0.74, k=None)
        return config, rho_fixed_point(config, params), params, report

    def test_mean_response(self, outcome):
        """Simulated E[T] is within 2% of the mean-field value."""
        config, _, params, report = outcome
        assert report.mean_T == pytest.approx(evaluate(config, params), rel=0.02)

    def test_fast_busy_fraction(self, outcome):
        """The fast busy fraction matches rho_fast."""
        _, fp, _, report = outcome
        assert report.busy_fast == pytest.approx(fp.rho_fast, abs=0.01)

    def test_fast_tail(self, outcome):
        """P(queue >= i) at fast servers matches the tail recursion."""
        config, fp, params, report = outcome
        tail = jsq.fast_tail(config, params, (fp.rho_fast, fp.rho_slow))
        for i in range(1, 4):
            assert report.hist_fast[i].frac_at_least == pytest.approx(tail.at(i), abs=0.01)


@pytest.mark.slow
class TestGeneralService:
    """Test JIQ with high-variance service sizes."""

    def test_hyperexponential_response(self):
        """With squared CV 4 the simulated E[T] agrees with the M/G/1 busy-queue formula."""
        service = ServiceDistribution(kind=ServiceKind.HYPEREXPONENTIAL2, cv2=4.0)
        config = _config(0.5, k=LARGE_FARM)
        params = PolicyParams(d_fast=2, d_slow=2, p_fast=1.0, p_slow=1.0)
        mean_field = _config(0.5, k=None)
        expected = jiq.mean_response_general(mean_field, solve_jiq_system(mean_field, params), service)
        report = run(config, DispatchPolicy.from_params(params), service, seed=17)
        assert report.mean_T == pytest.approx(expected, rel=0.05)


@pytest.mark.slow
class TestStabilityAtScale:
    """Test the growth flag on 500 servers at qF = 0.2, r = 5."""

    @pytest.mark.parametrize("kind", [PolicyKind.JIQ_DFDS, PolicyKind.JSQ_DFDS])
    def test_stable_split_not_flagged(self, kind):
        """pF = mu_fast qF with pS = 1 stays stable at lambda = 0.98."""
        config = _config(0.98, q_fast=0.2, r=5.0, k=500)
        p_fast, p_slow = stability_construction(config)
        policy = DispatchPolicy(kind=kind, d_fast=2, d_slow=2, p_fast=p_fast, p_slow=p_slow)
        report = run(config, policy, horizon_arrivals=1_000_000, warmup_arrivals=100_000, seed=21)
        assert not report.unstable_flag

    @pytest.mark.parametrize("kind", [PolicyKind.JIQ_DFDS, PolicyKind.JSQ_DFDS])
    def test_fast_only_queueing_flagged(self, kind):
        """pF = 1 overloads the fast class at lambda = 0.995."""
        config = _config(0.995, q_fast=0.2, r=5.0, k=500)
        policy = DispatchPolicy(kind=kind, d_fast=2, d_slow=2, p_fast=1.0, p_slow=1.0)
        report = run(config, policy, horizon_arrivals=1_000_000, warmup_arrivals=100_000, seed=21)
        assert report.unstable_flag


@pytest.mark.slow
class TestBaselinePolicies:
    """Test the power-of-d baselines at qF = 0.2, r = 10 on 100 servers."""

    @pytest.mark.parametrize("kind", [PolicyKind.JSQ_D, PolicyKind.SED_D])
    def test_class_blind_choice_unstable(self, kind):
        """With no fast server among four queried about 41% of the time, the slow class overloads at lambda = 0.9."""
        config = _config(0.9, q_fast=0.2, r=10.0, k=100)
        report = run(config, DispatchPolicy(kind=kind, d=4), horizon_arrivals=300_000, warmup_arrivals=30_000, seed=3)
        assert report.unstable_flag

    def test_weighted_choice_slow_at_light_load(self):
        """WJSQ-4 still sends work to slow servers at lambda = 0.2 and trails the JIQ-(2,2) optimum."""
        config = _config(0.2, q_fast=0.2, r=10.0, k=100)
        optimum = optimize(config.with_servers(None), PolicyFamily.JIQ, 2, 2, settings=SolverSettings(grid_step=1 / 32))
        report = run(
            config, DispatchPolicy(kind=PolicyKind.WJSQ_D, d=4), horizon_arrivals=300_000, warmup_arrivals=30_000, seed=3
        )
        assert report.completed_slow > 0
        assert report.mean_T > 1.5 * optimum.et_opt
