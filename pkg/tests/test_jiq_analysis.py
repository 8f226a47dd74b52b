"""Unit tests for JIQ-(dF,dS) queue lengths and mean response time."""

import pytest

from hetero_dispatch.analysis import jiq
from hetero_dispatch.analysis.fixedpoint import solve_jiq_system
from hetero_dispatch.errors import NoStableFixedPoint
from hetero_dispatch.models import (
    GeometricQueueDist,
    PolicyParams,
    ServerClass,
    ServiceDistribution,
    ServiceKind,
    SystemConfig,
)


def _config(lam: float, q_fast: float = 0.2, r: float = 5.0) -> SystemConfig:
    return SystemConfig(lam=lam, q_fast=q_fast, speed_ratio=r)


def _policy(d_fast=2, d_slow=2, p_fast=1.0, p_slow=1.0) -> PolicyParams:
    return PolicyParams(d_fast=d_fast, d_slow=d_slow, p_fast=p_fast, p_slow=p_slow)


class TestQueuePmf:
    """Test the state-dependent M/M/1 distribution."""

    def test_zero_is_pi0(self):
        """pi_0 is the idle probability."""
        dist = GeometricQueueDist(pi0=0.4, lam_idle=0.9, lam_busy=0.5, mu=1.0)
        assert jiq.queue_pmf(dist, 0) == 0.4
        assert jiq.queue_pmf(dist, -1) == 0.0

    def test_reduces_to_mm1(self):
        """Equal idle and busy rates give (1 - rho) rho^i."""
        rho = 0.7
        dist = GeometricQueueDist(pi0=1 - rho, lam_idle=rho, lam_busy=rho, mu=1.0)
        for i in range(10):
            assert jiq.queue_pmf(dist, i) == pytest.approx((1 - rho) * rho**i)

    def test_pmf_sums_to_one_at_fixed_point(self):
        """The pmf of both classes sums to 1 at a solved fixed point."""
        config = _config(0.74)
        fp = solve_jiq_system(config, _policy())
        for server_class in ServerClass:
            table = jiq.pmf_table(jiq.tagged_queue(config, fp, server_class))
            assert sum(table) == pytest.approx(1.0, abs=1e-10)

    def test_survival_matches_pmf(self):
        """P(N >= i) = 1 - sum_(j < i) pi_j."""
        config = _config(0.54)
        fp = solve_jiq_system(config, _policy())
        dist = jiq.tagged_queue(config, fp, ServerClass.FAST)
        for i in range(6):
            below = sum(jiq.queue_pmf(dist, j) for j in range(i))
            assert jiq.queue_survival(dist, i) == pytest.approx(1.0 - below, abs=1e-12)


class TestMeanResponseExponential:
    """Test E[T] under exponential service."""

    def test_table_light_load(self):
        """lambda = 0.14, pS = 0 gives 0.384."""
        assert jiq.mean_response(_config(0.14), _policy(p_slow=0.0)) == pytest.approx(0.384, abs=6e-4)

    def test_table_mid_load(self):
        """lambda = 0.74, pF = pS = 1 gives 1.101."""
        assert jiq.mean_response(_config(0.74), _policy()) == pytest.approx(1.101, abs=6e-4)

    def test_single_query_fast_only_is_mm1(self):
        """dF = 1 with pS = 0 makes each fast server an M/M/1 at rate lambda / qF."""
        config = _config(0.2, q_fast=0.5, r=10.0)
        et = jiq.mean_response(config, _policy(d_fast=1, d_slow=1, p_slow=0.0))
        assert et == pytest.approx(1.0 / (config.mu_fast - 0.4), rel=1e-10)
        assert et == pytest.approx(0.70513, abs=1e-5)

    def test_light_load_limit(self):
        """E[T] -> 1 / mu_fast as lambda -> 0."""
        config = _config(1e-6)
        assert jiq.mean_response(config, _policy()) == pytest.approx(1.0 / config.mu_fast, rel=1e-4)

    def test_littles_law(self):
        """lambda E[T] equals the pmf-based mean number per server."""
        config = _config(0.64)
        fp = solve_jiq_system(config, _policy(p_fast=0.9, p_slow=0.8))
        mean_jobs = 0.0
        for server_class, share in ((ServerClass.FAST, config.q_fast), (ServerClass.SLOW, config.q_slow)):
            table = jiq.pmf_table(jiq.tagged_queue(config, fp, server_class))
            mean_jobs += share * sum(i * p for i, p in enumerate(table))
        assert config.lam * jiq.mean_response_exponential(config, fp) == pytest.approx(mean_jobs, abs=1e-9)

    def test_mean_queue_length_closed_form(self):
        """mean_queue_length agrees with the pmf sum."""
        dist = GeometricQueueDist(pi0=0.5, lam_idle=0.8, lam_busy=0.6, mu=1.6)
        pi0 = (1.6 - 0.6) / (1.6 - 0.6 + 0.8)
        dist = dist.model_copy(update={"pi0": pi0})
        table = jiq.pmf_table(dist)
        assert jiq.mean_queue_length(dist) == pytest.approx(sum(i * p for i, p in enumerate(table)), rel=1e-10)

    def test_unconverged_fixed_point(self):
        """An unconverged fixed point is refused."""
        config = _config(0.5)
        fp = solve_jiq_system(config, _policy()).model_copy(update={"converged": False})
        with pytest.raises(NoStableFixedPoint):
            jiq.mean_response_exponential(config, fp)


class TestMeanResponseGeneral:
    """Test E[T] for general service shapes."""

    @pytest.fixture
    def solved(self):
        config = _config(0.6, q_fast=0.5, r=2.0)
        return config, solve_jiq_system(config, _policy())

    def test_exponential_coincides(self, solved):
        """Exponential service reproduces the Little's-law value."""
        config, fp = solved
        general = jiq.mean_response_general(config, fp, ServiceDistribution(kind=ServiceKind.EXPONENTIAL))
        assert general == pytest.approx(jiq.mean_response_exponential(config, fp), abs=1e-12)

    def test_deterministic_is_smaller(self, solved):
        """Deterministic sizes halve the waiting term."""
        config, fp = solved
        det = jiq.mean_response_general(config, fp, ServiceDistribution(kind=ServiceKind.DETERMINISTIC))
        assert det < jiq.mean_response_exponential(config, fp)

    def test_linear_in_second_moment(self, solved):
        """E[T] is affine in the squared CV at fixed means."""
        config, fp = solved
        values = {
            scv: jiq.mean_response_general(config, fp, dist)
            for scv, dist in (
                (0.0, ServiceDistribution.parse("det")),
                (1.0, ServiceDistribution.parse("exp")),
                (4.0, ServiceDistribution.parse("hyper:4")),
            )
        }
        slope = values[1.0] - values[0.0]
        assert values[4.0] == pytest.approx(values[0.0] + 4.0 * slope, rel=1e-10)

    def test_class_weights_sum_to_one(self, solved):
        """Per-class job shares sum to 1."""
        config, fp = solved
        by_class = jiq.mean_response_by_class(config, fp)
        assert by_class.weight_fast + by_class.weight_slow == pytest.approx(1.0, abs=1e-9)
        assert by_class.t_fast < by_class.t_slow

    def test_mean_response_dispatches_on_kind(self, solved):
        """mean_response uses the general formula for non-exponential shapes."""
        config, fp = solved
        det = ServiceDistribution(kind=ServiceKind.DETERMINISTIC)
        assert jiq.mean_response(config, _policy(), det) == pytest.approx(
            jiq.mean_response_general(config, fp, det), rel=1e-9
        )
