"""Unit tests for the busy-fraction and JIQ tagged-server fixed points."""

import numpy as np
import pytest

from hetero_dispatch.analysis.fixedpoint import (
    idle_share,
    jiq_residual,
    query_rate_fast,
    query_rate_slow,
    reduction_interval,
    rho_fixed_point,
    rho_map,
    scan_fixed_points,
    solve_jiq_system,
    solve_rho,
    tagged_rates,
)
from hetero_dispatch.analysis.optimizer import stability_construction
from hetero_dispatch.errors import ConfigError, InfeasibleParameters, NoStableFixedPoint
from hetero_dispatch.models import PolicyFamily, PolicyParams, SystemConfig


def _config(lam: float, q_fast: float = 0.2, r: float = 5.0) -> SystemConfig:
    return SystemConfig(lam=lam, q_fast=q_fast, speed_ratio=r)


def _policy(d_fast=2, d_slow=2, p_fast=1.0, p_slow=1.0, family=PolicyFamily.JIQ) -> PolicyParams:
    return PolicyParams(d_fast=d_fast, d_slow=d_slow, p_fast=p_fast, p_slow=p_slow, family=family)


def _conservation_gap(config: SystemConfig, rho_fast: float, rho_slow: float) -> float:
    total = config.q_fast * config.mu_fast * rho_fast + config.q_slow * config.mu_slow * rho_slow
    return abs(total - config.lam)


class TestQueryRates:
    """Test the per-server query rates."""

    @pytest.mark.parametrize(
        "lam, d_fast, q_fast, expected",
        [(0.5, 2, 0.5, 2.0), (0.2, 1, 0.2, 1.0), (0.9, 3, 0.5, 5.4)],
    )
    def test_query_rate_fast(self, lam, d_fast, q_fast, expected):
        """lambda dF / qF."""
        config = _config(lam, q_fast)
        assert query_rate_fast(config, _policy(d_fast=d_fast)) == pytest.approx(expected)

    def test_query_rate_slow(self):
        """lambda dS / qS."""
        assert query_rate_slow(_config(0.5, 0.2), _policy(d_slow=3)) == pytest.approx(0.5 * 3 / 0.8)


class TestIdleShare:
    """Test the chance of winning a uniform choice among idle servers."""

    def test_single_query(self):
        """With d = 1 the queried server always wins."""
        assert idle_share(1, 0.3) == 1.0

    def test_all_idle(self):
        """All d queried servers idle: each wins with 1/d."""
        for d in (2, 3, 5):
            assert idle_share(d, 1.0) == pytest.approx(1.0 / d)

    def test_none_other_idle(self):
        """pi0 = 0: no competitor is idle."""
        assert idle_share(4, 0.0) == pytest.approx(1.0)

    def test_two_servers(self):
        """d = 2: (1 - pi0) + pi0 / 2."""
        assert idle_share(2, 0.4) == pytest.approx(0.6 + 0.2)


class TestRhoFixedPoint:
    """Test the busy-fraction solver."""

    def test_slow_idle_closed_form(self):
        """pS = 0 gives (lambda / (mu_fast qF), 0)."""
        config = _config(0.2, q_fast=0.5, r=10.0)
        fp = rho_fixed_point(config, _policy(p_slow=0.0))
        assert fp.rho_fast == pytest.approx(0.22)
        assert fp.rho_slow == 0.0
        assert fp.lam_idle_slow == 0.0
        assert fp.lam_busy_slow == 0.0
        assert fp.converged
        assert [d.code for d in fp.diagnostics] == ["SLOW_CLASS_IDLE"]

    def test_slow_idle_overloaded(self):
        """pS = 0 with lambda >= qF mu_fast overloads the fast class."""
        config = _config(0.6, q_fast=0.5, r=1.0)
        with pytest.raises(NoStableFixedPoint):
            rho_fixed_point(config, _policy(p_slow=0.0))

    @pytest.mark.parametrize("family", [PolicyFamily.JIQ, PolicyFamily.JSQ])
    def test_conservation_at_table_point(self, family):
        """lambda = 0.74, qF = 0.2, r = 5, JSQ/JIQ-(2,2), pF = pS = 1 conserves work."""
        config = _config(0.74)
        fp = rho_fixed_point(config, _policy(family=family))
        assert fp.converged
        assert _conservation_gap(config, fp.rho_fast, fp.rho_slow) < 1e-9
        f_fast, f_slow = rho_map(config, _policy(family=family), fp.rho_fast, fp.rho_slow)
        assert f_fast == pytest.approx(fp.rho_fast, abs=1e-10)
        assert f_slow == pytest.approx(fp.rho_slow, abs=1e-10)

    def test_conservation_random_parameters(self):
        """Every converged solve satisfies the conservation identity."""
        rng = np.random.default_rng(7)
        solved = 0
        for _ in range(60):
            config = _config(rng.uniform(0.05, 0.9), rng.uniform(0.1, 0.9), rng.uniform(1.0, 10.0))
            policy = _policy(
                d_fast=int(rng.integers(1, 4)),
                d_slow=int(rng.integers(1, 4)),
                p_fast=rng.uniform(0.0, 1.0),
                p_slow=rng.uniform(0.05, 1.0),
            )
            try:
                fp = rho_fixed_point(config, policy)
            except InfeasibleParameters:
                continue
            solved += 1
            assert 0.0 <= fp.rho_fast < 1.0 and 0.0 <= fp.rho_slow < 1.0
            assert _conservation_gap(config, fp.rho_fast, fp.rho_slow) < 1e-9
            assert fp.lam_busy_fast < config.mu_fast
            assert fp.lam_busy_slow < config.mu_slow
        assert solved > 20

    def test_monotone_in_load(self):
        """rho_fast is nondecreasing in lambda."""
        previous = 0.0
        for lam in np.linspace(0.1, 0.8, 15):
            rho_fast, _ = solve_rho(_config(float(lam)), _policy())
            assert rho_fast >= previous - 1e-12
            previous = rho_fast

    def test_stability_construction_near_full_load(self):
        """pF = mu_fast qF, pS = 1 stays stable at lambda = 0.98."""
        config = _config(0.98)
        p_fast, p_slow = stability_construction(config)
        fp = rho_fixed_point(config, _policy(p_fast=p_fast, p_slow=p_slow))
        assert fp.rho_fast < 1.0 and fp.rho_slow < 1.0
        assert _conservation_gap(config, fp.rho_fast, fp.rho_slow) < 1e-9

    def test_unstable_combination(self):
        """Sending every queued job to a small slow class is infeasible."""
        config = _config(0.95, q_fast=0.5, r=10.0)
        with pytest.raises(NoStableFixedPoint):
            rho_fixed_point(config, _policy(p_fast=0.0, p_slow=1.0, family=PolicyFamily.JSQ))

    def test_supercritical_load(self):
        """lambda >= 1 is a ConfigError."""
        with pytest.raises(ConfigError):
            rho_fixed_point(_config(1.0), _policy())


class TestScanFixedPoints:
    """Test the multiplicity scan on the conserved reduction."""

    def test_single_root_matches_iteration(self):
        """The scan finds the damped-iteration limit."""
        config = _config(0.6)
        policy = _policy(p_fast=0.8, p_slow=0.7)
        fp = rho_fixed_point(config, policy)
        roots = scan_fixed_points(config, policy)
        assert len(roots) == 1
        assert roots[0][0] == pytest.approx(fp.rho_fast, abs=1e-9)
        assert roots[0][1] == pytest.approx(fp.rho_slow, abs=1e-9)

    def test_interval_respects_bounds(self):
        """The rho_fast interval keeps both busy fractions in [0, 1)."""
        config = _config(0.9)
        lo, hi = reduction_interval(config)
        assert 0.0 <= lo < hi < 1.0
        assert hi <= config.lam / (config.q_fast * config.mu_fast)


class TestJiqSystem:
    """Test the six-equation tagged-server system."""

    def test_residual_small(self):
        """All six equations hold at the returned point."""
        config = _config(0.74)
        policy = _policy()
        fp = solve_jiq_system(config, policy)
        assert fp.converged
        assert jiq_residual(config, policy, fp) < 1e-10

    def test_agrees_with_busy_fraction_level(self):
        """The tagged-server solution has pi0 = 1 - rho of the busy-fraction solution."""
        config = _config(0.6)
        policy = _policy(p_fast=0.9, p_slow=0.6)
        tagged = solve_jiq_system(config, policy)
        busy = rho_fixed_point(config, policy)
        assert tagged.rho_fast == pytest.approx(busy.rho_fast, abs=1e-8)
        assert tagged.rho_slow == pytest.approx(busy.rho_slow, abs=1e-8)

    def test_single_fast_query_idle_rate(self):
        """dF = 1: lam_idle_fast = lambda / qF exactly."""
        config = _config(0.5, q_fast=0.5, r=2.0)
        fp = solve_jiq_system(config, _policy(d_fast=1, d_slow=2))
        assert fp.lam_idle_fast == pytest.approx(0.5 / 0.5, rel=1e-12)

    def test_slow_idle_is_exact_zero(self):
        """pS = 0 leaves every slow-side quantity at exactly 0."""
        fp = solve_jiq_system(_config(0.3), _policy(p_slow=0.0))
        assert (fp.rho_slow, fp.lam_idle_slow, fp.lam_busy_slow) == (0.0, 0.0, 0.0)
        assert fp.pi0_slow == 1.0

    def test_light_load_limit(self):
        """As lambda -> 0: pi0 -> 1, lam_idle_fast -> lambda / qF, lam_idle_slow -> 0."""
        lam = 1e-6
        config = _config(lam)
        fp = solve_jiq_system(config, _policy())
        assert fp.pi0_fast == pytest.approx(1.0, abs=1e-5)
        assert fp.pi0_slow == pytest.approx(1.0, abs=1e-5)
        assert fp.lam_idle_fast == pytest.approx(lam / config.q_fast, rel=1e-4)
        assert fp.lam_idle_slow < 1e-9

    def test_rates_consistent_with_tagged_rates(self):
        """Stored rates equal tagged_rates at the stored idle probabilities."""
        config = _config(0.44)
        policy = _policy(p_fast=1.0, p_slow=0.5)
        fp = solve_jiq_system(config, policy)
        rates = tagged_rates(config, policy, fp.pi0_fast, fp.pi0_slow)
        stored = (fp.lam_idle_fast, fp.lam_busy_fast, fp.lam_idle_slow, fp.lam_busy_slow)
        assert rates == pytest.approx(stored, abs=1e-10)

    def test_unstable_combination(self):
        """Infeasible parameters raise NoStableFixedPoint."""
        config = _config(0.95, q_fast=0.5, r=10.0)
        with pytest.raises(NoStableFixedPoint):
            solve_jiq_system(config, _policy(p_fast=0.0, p_slow=1.0))
