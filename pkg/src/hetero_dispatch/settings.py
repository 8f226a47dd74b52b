"""Numerical settings and config-file loading."""

import logging
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from hetero_dispatch.errors import ConfigError
from hetero_dispatch.models import (
    PolicyFamily,
    PolicyParams,
    ServiceDistribution,
    ServiceKind,
    SystemConfig,
)

logger = logging.getLogger(__name__)


class SolverSettings(BaseModel):
    """Every tolerance and iteration limit used by the solvers, with their defaults."""
    model_config = ConfigDict(frozen=True)

    # Fixed-point iteration
    damping: float = Field(default=0.5, gt=0.0, le=1.0, description="alpha in x <- (1 - alpha) x + alpha F(x)")
    fixed_point_tol: float = Field(default=1e-12, gt=0.0, description="Max-norm residual tolerance")
    max_iterations: int = Field(default=100_000, ge=1, description="Iteration cap before falling back to brentq")
    fallback_tol: float = Field(default=1e-9, gt=0.0, description="Residual accepted after a root-finder fallback")
    scan_multiplicity: bool = Field(default=True, description="Scan for further fixed points after convergence")
    multiplicity_scan_points: int = Field(default=200, ge=10, description="Grid size for fixed-point multiplicity scans")

    # Tails and sums
    tail_tol: float = Field(default=1e-12, gt=0.0, description="Stop the tail recursion below this value")
    clamp_tol: float = Field(default=1e-9, gt=0.0, description="Negative iterates smaller than this clamp to 0")
    max_tail_length: int = Field(default=10_000, ge=2, description="Hard cap on tail length")
    conditional_tol: float = Field(default=1e-14, gt=0.0, description="Summand cutoff for conditional waits")
    conditional_max_terms: int = Field(default=10_000, ge=1)
    pmf_tol: float = Field(default=1e-15, gt=0.0, description="Geometric pmf truncation")

    # Optimizer
    grid_step: float = Field(default=1.0 / 64.0, gt=0.0, le=1.0)
    refinement_passes: int = Field(default=2, ge=0)
    refinement_factor: int = Field(default=8, ge=2)
    heavy_traffic_tol: float = Field(default=1e-9, gt=0.0)
    tie_tol: float = Field(default=1e-12, gt=0.0, description="Relative tolerance for equal objective values")

    # Oracle
    oracle_cap_mass: float = Field(default=1e-8, gt=0.0, description="Maximum stationary mass at the queue cap")
    oracle_residual: float = Field(default=1e-10, gt=0.0, description="Maximum ||pi Q||_inf")
    max_states: int = Field(default=10_000_000, ge=1)
    direct_solve_limit: int = Field(default=250_000, ge=1, description="Above this size use preconditioned GMRES")


DEFAULT_SETTINGS = SolverSettings()


class RunConfig(BaseModel):
    """
    Schema of the YAML/JSON run-config file.

    Key names are part of the CLI contract; ``k`` is an integer or ``"inf"``.
    """
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    lam: float | None = Field(default=None, alias="lambda", description="Arrival rate per server")
    q_fast: float | None = Field(default=None, description="Fraction of fast servers")
    speed_ratio: float | None = Field(default=None, description="mu_fast / mu_slow")
    k: int | str | None = Field(default=None, description="Number of servers, or 'inf'")
    d_fast: int | None = None
    d_slow: int | None = None
    p_fast: float | None = None
    p_slow: float | None = None
    family: PolicyFamily | None = None
    service_kind: str | None = Field(default=None, description="exp, det, erlang:k or hyper")
    service_cv2: float | None = Field(default=None, description="Target cv^2 for hyper service")
    settings: SolverSettings = Field(default_factory=SolverSettings)

    def merged(self, overrides: dict[str, Any]) -> "RunConfig":
        """Return a copy with every non-None override applied (CLI flags win)."""
        data = self.model_dump(by_alias=True, exclude_none=True)
        data.update({key: value for key, value in overrides.items() if value is not None})
        return RunConfig.model_validate(data)

    def system(self, default_k: int | str | None = None) -> SystemConfig:
        missing = [name for name, value in (("lambda", self.lam), ("q_fast", self.q_fast),
                                            ("speed_ratio", self.speed_ratio)) if value is None]
        if missing:
            raise ConfigError(f"Missing required setting(s): {', '.join(missing)}")
        k = self.k if self.k is not None else default_k
        try:
            return SystemConfig(lam=self.lam, q_fast=self.q_fast, speed_ratio=self.speed_ratio, num_servers=k)
        except ValidationError as exc:
            raise ConfigError(_first_error(exc)) from exc

    def policy(self) -> PolicyParams:
        try:
            return PolicyParams(
                d_fast=self.d_fast if self.d_fast is not None else 2,
                d_slow=self.d_slow if self.d_slow is not None else 2,
                p_fast=self.p_fast if self.p_fast is not None else 1.0,
                p_slow=self.p_slow if self.p_slow is not None else 1.0,
                family=self.family or PolicyFamily.JIQ,
            )
        except ValidationError as exc:
            raise ConfigError(_first_error(exc)) from exc

    def service(self) -> ServiceDistribution:
        text = self.service_kind or ServiceKind.EXPONENTIAL.value
        if text == ServiceKind.HYPEREXPONENTIAL2.value and self.service_cv2 is not None:
            text = f"hyper:{self.service_cv2}"
        try:
            return ServiceDistribution.parse(text)
        except ValidationError as exc:
            raise ConfigError(_first_error(exc)) from exc


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    location = ".".join(str(part) for part in err.get("loc", ())) or "value"
    return f"{location}: {err.get('msg', str(exc))}"


def load_run_config(path: str | Path) -> RunConfig:
    """
    Load a run config from a YAML or JSON file.

    Raises:
        ConfigError: If the file is missing, unparsable or has unknown keys
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"Could not parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a mapping of settings")
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_first_error(exc)}") from exc
    logger.debug("Loaded run config from %s", path)
    return config
