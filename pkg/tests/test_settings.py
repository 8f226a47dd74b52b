"""Unit tests for solver settings and run-config loading."""

from pathlib import Path

import pytest

from hetero_dispatch.errors import ConfigError
from hetero_dispatch.models import PolicyFamily, ServiceKind
from hetero_dispatch.settings import DEFAULT_SETTINGS, RunConfig, SolverSettings, load_run_config


class TestSolverSettings:
    """Test default tolerances."""

    def test_defaults(self):
        """Defaults match the documented values."""
        assert DEFAULT_SETTINGS.damping == 0.5
        assert DEFAULT_SETTINGS.fixed_point_tol == 1e-12
        assert DEFAULT_SETTINGS.max_iterations == 100_000
        assert DEFAULT_SETTINGS.tail_tol == 1e-12
        assert DEFAULT_SETTINGS.grid_step == 1 / 64
        assert DEFAULT_SETTINGS.oracle_cap_mass == 1e-8

    def test_rejects_bad_damping(self):
        """Damping must lie in (0, 1]."""
        with pytest.raises(ValueError):
            SolverSettings(damping=0.0)

    def test_dump_round_trip(self):
        """Settings survive model_dump for transport through graph state."""
        settings = SolverSettings(grid_step=1 / 16, refinement_passes=1)
        assert SolverSettings.model_validate(settings.model_dump()) == settings


class TestRunConfig:
    """Test RunConfig merging and conversion."""

    def test_merged_flags_win(self):
        """Non-None overrides replace file values; None leaves them alone."""
        run = RunConfig.model_validate({"lambda": 0.5, "q_fast": 0.2, "speed_ratio": 5.0})
        merged = run.merged({"lambda": 0.9, "q_fast": None, "family": "jsq"})
        assert merged.lam == 0.9
        assert merged.q_fast == 0.2
        assert merged.family is PolicyFamily.JSQ

    def test_system_requires_core_fields(self):
        """Missing lambda, q_fast or speed_ratio is a ConfigError naming them."""
        with pytest.raises(ConfigError, match="lambda"):
            RunConfig(q_fast=0.5, speed_ratio=2.0).system()

    def test_system_default_k(self):
        """default_k applies when the config has no k."""
        run = RunConfig.model_validate({"lambda": 0.5, "q_fast": 0.5, "speed_ratio": 2.0})
        assert run.system().num_servers is None
        assert run.system(default_k=10).num_servers == 10

    def test_system_invalid_k(self):
        """A k that splits the classes unevenly is a ConfigError."""
        run = RunConfig.model_validate({"lambda": 0.5, "q_fast": 0.5, "speed_ratio": 2.0, "k": 3})
        with pytest.raises(ConfigError):
            run.system()

    def test_policy_defaults(self):
        """Policy defaults are JIQ-(2,2) with pF = pS = 1."""
        policy = RunConfig().policy()
        assert (policy.d_fast, policy.d_slow, policy.p_fast, policy.p_slow) == (2, 2, 1.0, 1.0)
        assert policy.family is PolicyFamily.JIQ

    def test_policy_invalid_probability(self):
        """Probabilities outside [0, 1] are a ConfigError."""
        with pytest.raises(ConfigError):
            RunConfig(p_fast=2.0).policy()

    def test_service_hyper_with_cv2(self):
        """service_kind hyper combines with service_cv2."""
        service = RunConfig(service_kind="hyper", service_cv2=4.0).service()
        assert service.kind is ServiceKind.HYPEREXPONENTIAL2
        assert service.scv == 4.0

    def test_service_default_exponential(self):
        """No service_kind means exponential service."""
        assert RunConfig().service().kind is ServiceKind.EXPONENTIAL


class TestLoadRunConfig:
    """Test loading YAML and JSON files."""

    def test_loads_yaml(self, tmp_path):
        """A YAML file with nested settings loads."""
        path = tmp_path / "run.yaml"
        path.write_text(
            "lambda: 0.7\nq_fast: 0.2\nspeed_ratio: 5\nk: inf\nfamily: jsq\nsettings:\n  grid_step: 0.0625\n"
        )
        run = load_run_config(path)
        assert run.lam == 0.7
        assert run.family is PolicyFamily.JSQ
        assert run.settings.grid_step == 0.0625
        assert run.system().is_mean_field

    def test_loads_json(self, tmp_path):
        """JSON is a subset of YAML and loads the same way."""
        path = tmp_path / "run.json"
        path.write_text('{"lambda": 0.3, "q_fast": 0.5, "speed_ratio": 2, "k": 4}')
        assert load_run_config(path).system().k_fast == 2

    def test_missing_file(self, tmp_path):
        """A missing file is a ConfigError."""
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.yaml")

    def test_unknown_key(self, tmp_path):
        """Unknown keys are rejected."""
        path = tmp_path / "run.yaml"
        path.write_text("lambda: 0.5\nmu: 3\n")
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_not_a_mapping(self, tmp_path):
        """A top-level list is rejected."""
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_run_config(path)

    def test_bundled_example_loads(self):
        """The example config at the repository root is valid."""
        path = Path(__file__).resolve().parents[1] / "hetero-dispatch.config.yaml"
        run = load_run_config(path)
        assert run.system().lam == 0.74
