"""Core Pydantic models for two-speed server farms and their dispatching policies."""

import math
from enum import Enum
from pathlib import Path
from typing import Annotated, Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import TypedDict

from hetero_dispatch.errors import ConfigError


# Normalization tolerance for mu_fast * q_fast + mu_slow * q_slow = 1
NORMALIZATION_TOL = 1e-12

# Finite-k configs must put an integer number of servers in each class
CLASS_SIZE_TOL = 1e-9


class PolicyFamily(str, Enum):
    """How a busy server is chosen among the queried ones."""
    JIQ = "jiq"  # uniformly at random
    JSQ = "jsq"  # shortest queue


class ServerClass(str, Enum):
    """Speed class of a server."""
    FAST = "fast"
    SLOW = "slow"


class ServiceKind(str, Enum):
    """Closed-form service-time families with finite second moments."""
    EXPONENTIAL = "exp"
    DETERMINISTIC = "det"
    ERLANG = "erlang"
    HYPEREXPONENTIAL2 = "hyper"


class DiagnosticSeverity(str, Enum):
    """Severity of a solver diagnostic."""
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


class SolverDiagnostic(BaseModel):
    """A non-fatal finding recorded while solving or optimizing."""
    model_config = ConfigDict(frozen=True)

    severity: DiagnosticSeverity = Field(description="Diagnostic severity level")
    code: str = Field(description="Stable code (e.g., 'MULTIPLE_FIXED_POINTS', 'SLOW_CLASS_IDLE')")
    message: str = Field(description="Human-readable description")
    context: dict[str, float] = Field(
        default_factory=dict,
        description="Numeric values that triggered the diagnostic",
    )


def derive_rates(q_fast: float, speed_ratio: float) -> tuple[float, float]:
    """
    Derive (mu_fast, mu_slow) from the class mix and speed ratio.

    The farm is normalized to unit capacity per server:
    mu_fast * q_fast + mu_slow * (1 - q_fast) = 1.

    Args:
        q_fast: Fraction of servers that are fast, in (0, 1)
        speed_ratio: mu_fast / mu_slow, at least 1

    Returns:
        Tuple (mu_fast, mu_slow)

    Raises:
        ConfigError: If q_fast is outside (0, 1) or speed_ratio < 1

    Examples:
        >>> derive_rates(0.5, 1.0)
        (1.0, 1.0)
    """
    if not 0.0 < q_fast < 1.0:
        raise ConfigError(f"q_fast must lie in (0, 1), got {q_fast}")
    if not speed_ratio >= 1.0:
        raise ConfigError(f"speed_ratio must be at least 1, got {speed_ratio}")
    mu_slow = 1.0 / (q_fast * speed_ratio + 1.0 - q_fast)
    mu_fast = speed_ratio * mu_slow
    return mu_fast, mu_slow


class SystemConfig(BaseModel):
    """
    The (lambda, q_fast, r, k) description of a two-speed server farm.

    Service rates are always derived from (q_fast, speed_ratio); passing
    mu_fast or mu_slow explicitly is accepted only when they agree with the
    normalization. ``num_servers=None`` selects the k -> infinity mean-field
    regime; a finite value selects simulation or the exact oracle.
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(alias="lambda", gt=0.0, description="Arrival rate per server (per unit capacity)")
    q_fast: float = Field(gt=0.0, lt=1.0, description="Fraction of servers that are fast")
    speed_ratio: float = Field(ge=1.0, description="mu_fast / mu_slow")
    mu_fast: float = Field(gt=0.0, description="Fast-server service rate (derived)")
    mu_slow: float = Field(gt=0.0, description="Slow-server service rate (derived)")
    num_servers: int | None = Field(
        default=None,
        description="Number of servers k; None means infinitely many (mean-field)",
    )

    @model_validator(mode="before")
    @classmethod
    def _derive_service_rates(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        k = data.get("num_servers", data.get("k"))
        data.pop("k", None)
        if isinstance(k, str):
            k = None if k.strip().lower() in ("inf", "infinite", "infinity") else int(k)
        data["num_servers"] = k
        q_fast = data.get("q_fast")
        speed_ratio = data.get("speed_ratio", data.get("r"))
        data.pop("r", None)
        if q_fast is None or speed_ratio is None:
            return data
        data["speed_ratio"] = speed_ratio
        mu_fast, mu_slow = derive_rates(float(q_fast), float(speed_ratio))
        for name, derived in (("mu_fast", mu_fast), ("mu_slow", mu_slow)):
            given = data.get(name)
            if given is not None and abs(float(given) - derived) > NORMALIZATION_TOL:
                raise ConfigError(f"{name}={given} is inconsistent with the normalization (expected {derived})")
            data[name] = derived
        return data

    @model_validator(mode="after")
    def _check_class_sizes(self) -> "SystemConfig":
        if self.num_servers is None:
            return self
        if self.num_servers < 2:
            raise ConfigError(f"A finite farm needs at least 2 servers, got {self.num_servers}")
        k_fast = self.q_fast * self.num_servers
        if abs(k_fast - round(k_fast)) > CLASS_SIZE_TOL:
            raise ConfigError(
                f"q_fast * k = {k_fast} is not an integer (q_fast={self.q_fast}, k={self.num_servers})"
            )
        if round(k_fast) < 1 or round(k_fast) > self.num_servers - 1:
            raise ConfigError("Both server classes must contain at least one server")
        return self

    @property
    def q_slow(self) -> float:
        return 1.0 - self.q_fast

    @property
    def is_mean_field(self) -> bool:
        return self.num_servers is None

    @property
    def k_fast(self) -> int:
        """Number of fast servers (finite farms only)."""
        if self.num_servers is None:
            raise ConfigError("k_fast is undefined for the mean-field (infinite) farm")
        return int(round(self.q_fast * self.num_servers))

    @property
    def k_slow(self) -> int:
        """Number of slow servers (finite farms only)."""
        if self.num_servers is None:
            raise ConfigError("k_slow is undefined for the mean-field (infinite) farm")
        return self.num_servers - self.k_fast

    def require_subcritical(self) -> None:
        """Raise ConfigError unless 0 < lambda < 1 (maximum stability region)."""
        if not self.lam < 1.0:
            raise ConfigError(f"lambda must be below the total capacity 1, got {self.lam}")

    def with_load(self, lam: float) -> "SystemConfig":
        return self.model_copy(update={"lam": lam})

    def with_servers(self, num_servers: int | None) -> "SystemConfig":
        return SystemConfig(
            lam=self.lam, q_fast=self.q_fast, speed_ratio=self.speed_ratio, num_servers=num_servers
        )


class PolicyParams(BaseModel):
    """(dF, dS, pF, pS) plus the family; one member of JIQ-(dF,dS) or JSQ-(dF,dS)."""
    model_config = ConfigDict(frozen=True)

    d_fast: int = Field(ge=1, description="Number of fast servers queried per arrival")
    d_slow: int = Field(ge=1, description="Number of slow servers queried per arrival")
    p_fast: float = Field(ge=0.0, le=1.0, description="P(queue at a fast server | all queried busy)")
    p_slow: float = Field(ge=0.0, le=1.0, description="P(use an idle slow server | all queried fast busy)")
    family: PolicyFamily = Field(default=PolicyFamily.JIQ, description="JIQ or JSQ busy-server choice")

    def check_against(self, config: SystemConfig) -> None:
        """Querying is without replacement: dF <= kF and dS <= kS for finite farms."""
        if config.num_servers is None:
            return
        if self.d_fast > config.k_fast:
            raise ConfigError(f"d_fast={self.d_fast} exceeds the {config.k_fast} fast servers")
        if self.d_slow > config.k_slow:
            raise ConfigError(f"d_slow={self.d_slow} exceeds the {config.k_slow} slow servers")

    def with_probabilities(self, p_fast: float, p_slow: float) -> "PolicyParams":
        return self.model_copy(update={"p_fast": p_fast, "p_slow": p_slow})


class ServiceDistribution(BaseModel):
    """
    A service-time shape with a given mean.

    Slow-server sizes are r times fast-server sizes, so both classes share the
    same squared coefficient of variation; ``scaled_to`` rescales the mean
    while keeping the shape.
    """
    model_config = ConfigDict(frozen=True)

    kind: ServiceKind = Field(default=ServiceKind.EXPONENTIAL, description="Distribution family")
    mean: float = Field(default=1.0, gt=0.0, description="Mean service time")
    erlang_k: int | None = Field(default=None, ge=1, description="Number of phases (Erlang only)")
    cv2: float | None = Field(default=None, description="Target squared CV (hyperexponential only, > 1)")

    @model_validator(mode="after")
    def _check_shape(self) -> "ServiceDistribution":
        if self.kind is ServiceKind.ERLANG and self.erlang_k is None:
            raise ConfigError("Erlang service needs erlang_k")
        if self.kind is ServiceKind.HYPEREXPONENTIAL2 and (self.cv2 is None or not self.cv2 > 1.0):
            raise ConfigError(f"Hyperexponential service needs cv2 > 1, got {self.cv2}")
        return self

    @classmethod
    def parse(cls, text: str, mean: float = 1.0) -> "ServiceDistribution":
        """Parse the CLI form ``exp``, ``det``, ``erlang:K`` or ``hyper:CV2``."""
        name, _, arg = text.strip().lower().partition(":")
        try:
            kind = ServiceKind(name)
        except ValueError:
            raise ConfigError(f"Unknown service kind '{text}' (expected exp, det, erlang:k or hyper:cv2)") from None
        if kind is ServiceKind.ERLANG:
            return cls(kind=kind, mean=mean, erlang_k=int(arg or 1))
        if kind is ServiceKind.HYPEREXPONENTIAL2:
            if not arg:
                raise ConfigError("hyper service needs a cv2 value, e.g. hyper:4")
            return cls(kind=kind, mean=mean, cv2=float(arg))
        return cls(kind=kind, mean=mean)

    @property
    def scv(self) -> float:
        """Squared coefficient of variation."""
        match self.kind:
            case ServiceKind.EXPONENTIAL:
                return 1.0
            case ServiceKind.DETERMINISTIC:
                return 0.0
            case ServiceKind.ERLANG:
                return 1.0 / self.erlang_k
            case ServiceKind.HYPEREXPONENTIAL2:
                return self.cv2
        raise ConfigError(f"Unhandled service kind {self.kind}")

    def scaled_to(self, mean: float) -> "ServiceDistribution":
        return self.model_copy(update={"mean": mean})

    def hyperexponential_branches(self) -> tuple[float, float, float]:
        """
        Balanced-means two-phase parameters (p1, rate1, rate2) for this mean and cv2.

        Each branch carries half of the mean: p1 / rate1 = (1 - p1) / rate2 = mean / 2.
        """
        if self.kind is not ServiceKind.HYPEREXPONENTIAL2:
            raise ConfigError("Branch parameters exist only for hyperexponential service")
        p1 = 0.5 * (1.0 + math.sqrt((self.cv2 - 1.0) / (self.cv2 + 1.0)))
        return p1, 2.0 * p1 / self.mean, 2.0 * (1.0 - p1) / self.mean

    def spec_string(self) -> str:
        """Inverse of ``parse``."""
        if self.kind is ServiceKind.ERLANG:
            return f"erlang:{self.erlang_k}"
        if self.kind is ServiceKind.HYPEREXPONENTIAL2:
            return f"hyper:{self.cv2:g}"
        return self.kind.value


def second_moment(dist: ServiceDistribution) -> float:
    """E[Y^2] = (1 + cv^2) * mean^2, exact for every supported family."""
    return (1.0 + dist.scv) * dist.mean * dist.mean


# =============================================================================
# Analysis results
# =============================================================================

class RhoFixedPoint(BaseModel):
    """Busy fractions plus the tagged-server rates of the JIQ mean-field system."""
    model_config = ConfigDict(frozen=True)

    rho_fast: float = Field(ge=0.0, lt=1.0, description="Fraction of time a fast server is busy")
    rho_slow: float = Field(ge=0.0, lt=1.0, description="Fraction of time a slow server is busy")
    pi0_fast: float = Field(gt=0.0, le=1.0, description="Idle probability of a tagged fast server")
    pi0_slow: float = Field(gt=0.0, le=1.0, description="Idle probability of a tagged slow server")
    lam_idle_fast: float = Field(default=0.0, ge=0.0, description="Arrival rate to an idle fast server")
    lam_busy_fast: float = Field(default=0.0, ge=0.0, description="Arrival rate to a busy fast server")
    lam_idle_slow: float = Field(default=0.0, ge=0.0, description="Arrival rate to an idle slow server")
    lam_busy_slow: float = Field(default=0.0, ge=0.0, description="Arrival rate to a busy slow server")
    converged: bool = Field(description="True if the residual fell below tolerance")
    iterations: int = Field(ge=0, description="Iterations used by the solver")
    residual: float = Field(ge=0.0, description="Max-norm residual at the returned point")
    diagnostics: list[SolverDiagnostic] = Field(
        default_factory=list,
        description="Non-fatal findings (fallbacks, multiplicity, idle slow class)",
    )


class GeometricQueueDist(BaseModel):
    """Stationary law of a state-dependent M/M/1 queue (tagged server under JIQ)."""
    model_config = ConfigDict(frozen=True)

    pi0: float = Field(gt=0.0, le=1.0, description="Idle probability")
    lam_idle: float = Field(ge=0.0, description="Arrival rate while idle")
    lam_busy: float = Field(ge=0.0, description="Arrival rate while busy")
    mu: float = Field(gt=0.0, description="Service rate")

    @model_validator(mode="after")
    def _check_stable(self) -> "GeometricQueueDist":
        if not self.lam_busy < self.mu:
            raise ConfigError(f"lam_busy={self.lam_busy} must be below mu={self.mu}")
        return self


class ClassResponse(BaseModel):
    """Per-class mean response times and the share of jobs each class serves."""
    model_config = ConfigDict(frozen=True)

    t_fast: float = Field(gt=0.0, description="Mean response time of jobs run on fast servers")
    t_slow: float = Field(gt=0.0, description="Mean response time of jobs run on slow servers")
    weight_fast: float = Field(ge=0.0, description="Fraction of jobs run on fast servers")
    weight_slow: float = Field(ge=0.0, description="Fraction of jobs run on slow servers")


class TailDistribution(BaseModel):
    """Stationary fractions f_i (or s_i) of servers with at least i jobs."""
    model_config = ConfigDict(frozen=True)

    tail: tuple[float, ...] = Field(description="f_0 = 1, f_1, f_2, ... truncated below trunc_tol")
    trunc_tol: float = Field(gt=0.0, description="Truncation threshold")
    server_class: ServerClass = Field(description="Fast or slow servers")

    @field_validator("tail")
    @classmethod
    def _check_tail(cls, tail: tuple[float, ...]) -> tuple[float, ...]:
        if not tail or tail[0] != 1.0:
            raise ConfigError("A tail sequence starts with f_0 = 1")
        for prev, cur in zip(tail, tail[1:]):
            if not 0.0 <= cur <= prev:
                raise ConfigError("Tail values must be nonincreasing and in [0, 1]")
        return tail

    def at(self, i: int) -> float:
        """f_i, zero beyond the truncation point."""
        return self.tail[i] if i < len(self.tail) else 0.0

    @property
    def busy_fraction(self) -> float:
        return self.at(1)


# =============================================================================
# Optimization results
# =============================================================================

class OptMethod(str, Enum):
    """How an optimum was searched for."""
    GRID_REFINE = "grid_refine"
    HEURISTIC = "heuristic"
    SPLIT = "split"  # d = 1 single probabilistic choice


class OptCandidate(BaseModel):
    """One evaluated (pF, pS) point; et is None when infeasible."""
    model_config = ConfigDict(frozen=True)

    p_fast: float = Field(ge=0.0, le=1.0)
    p_slow: float = Field(ge=0.0, le=1.0)
    et: float | None = Field(default=None, description="Mean response time, None if infeasible")


class OptResult(BaseModel):
    """Best (pF, pS) found for one family at fixed (dF, dS)."""
    model_config = ConfigDict(frozen=True)

    family: PolicyFamily = Field(description="Policy family optimized")
    d_fast: int = Field(ge=0, description="Fast servers queried (0 for the d = 1 split)")
    d_slow: int = Field(ge=0, description="Slow servers queried (0 for the d = 1 split)")
    p_fast_opt: float = Field(ge=0.0, le=1.0)
    p_slow_opt: float = Field(ge=0.0, le=1.0)
    et_opt: float = Field(gt=0.0, description="Minimized mean response time")
    feasible_fraction: float = Field(ge=0.0, le=1.0, description="Share of evaluated points that were stable")
    method: OptMethod = Field(description="Search method")
    candidates: list[OptCandidate] = Field(default_factory=list, description="Audit trail of evaluated points")
    diagnostics: list[SolverDiagnostic] = Field(default_factory=list)


# =============================================================================
# Simulation
# =============================================================================

class PolicyKind(str, Enum):
    """Dispatching policies the simulator implements (values are CLI names)."""
    JIQ_DFDS = "jiqd"
    JSQ_DFDS = "jsqd"
    JSQ_D = "jsq-d"
    SED_D = "sed-d"
    WJSQ_D = "wjsq-d"
    JIQ_GLOBAL = "jiq-global"
    RANDOM = "random"


class DispatchPolicy(BaseModel):
    """
    A fully specified dispatching rule.

    The (dF, dS) kinds use d_fast/d_slow/p_fast/p_slow; the power-of-d
    baselines use d; JIQ_GLOBAL uses nothing; RANDOM optionally takes
    split_p_fast to pick the class first (the collapsed d = 1 policy).
    """
    model_config = ConfigDict(frozen=True)

    kind: PolicyKind
    d_fast: int | None = Field(default=None, ge=1)
    d_slow: int | None = Field(default=None, ge=1)
    p_fast: float | None = Field(default=None, ge=0.0, le=1.0)
    p_slow: float | None = Field(default=None, ge=0.0, le=1.0)
    d: int | None = Field(default=None, ge=1, description="Servers queried by power-of-d baselines")
    split_p_fast: float | None = Field(default=None, ge=0.0, le=1.0, description="Class split for RANDOM")

    @model_validator(mode="after")
    def _check_fields(self) -> "DispatchPolicy":
        if self.kind in (PolicyKind.JIQ_DFDS, PolicyKind.JSQ_DFDS):
            if None in (self.d_fast, self.d_slow, self.p_fast, self.p_slow):
                raise ConfigError(f"{self.kind.value} needs d_fast, d_slow, p_fast and p_slow")
        elif self.kind in (PolicyKind.JSQ_D, PolicyKind.SED_D, PolicyKind.WJSQ_D):
            if self.d is None:
                raise ConfigError(f"{self.kind.value} needs d")
        return self

    @classmethod
    def from_params(cls, params: PolicyParams) -> "DispatchPolicy":
        kind = PolicyKind.JIQ_DFDS if params.family is PolicyFamily.JIQ else PolicyKind.JSQ_DFDS
        return cls(
            kind=kind,
            d_fast=params.d_fast,
            d_slow=params.d_slow,
            p_fast=params.p_fast,
            p_slow=params.p_slow,
        )

    @property
    def label(self) -> str:
        """Short human-readable name, e.g. 'JSQ-(2,2)' or 'SED-4'."""
        match self.kind:
            case PolicyKind.JIQ_DFDS:
                return f"JIQ-({self.d_fast},{self.d_slow})"
            case PolicyKind.JSQ_DFDS:
                return f"JSQ-({self.d_fast},{self.d_slow})"
            case PolicyKind.JSQ_D:
                return f"JSQ-{self.d}"
            case PolicyKind.SED_D:
                return f"SED-{self.d}"
            case PolicyKind.WJSQ_D:
                return f"WJSQ-{self.d}"
            case PolicyKind.JIQ_GLOBAL:
                return "JIQ"
        return "Random" if self.split_p_fast is None else f"Split({self.split_p_fast:g})"


class QueueLengthBin(BaseModel):
    """Time-averaged share of a class's servers at queue length i."""
    model_config = ConfigDict(frozen=True)

    i: int = Field(ge=0)
    frac_at_least: float = Field(ge=0.0, le=1.0)
    frac_exactly: float = Field(ge=0.0, le=1.0)


class SimReport(BaseModel):
    """Statistics of one seeded simulation run."""
    model_config = ConfigDict(frozen=True)

    policy: str = Field(description="Policy label")
    mean_T: float = Field(description="Mean response time over post-warmup arrivals")
    ci_halfwidth_99: float = Field(ge=0.0, description="Batch-means 99% confidence half-width")
    busy_fast: float = Field(ge=0.0, le=1.0, description="Time-averaged busy fraction of fast servers")
    busy_slow: float = Field(ge=0.0, le=1.0, description="Time-averaged busy fraction of slow servers")
    busy_fast_halfwidth_99: float = Field(default=0.0, ge=0.0)
    busy_slow_halfwidth_99: float = Field(default=0.0, ge=0.0)
    hist_fast: list[QueueLengthBin] = Field(default_factory=list)
    hist_slow: list[QueueLengthBin] = Field(default_factory=list)
    batch_means: list[float] = Field(default_factory=list, description="Per-batch mean response times")
    completed_fast: int = Field(default=0, ge=0, description="Post-warmup jobs served on fast servers")
    completed_slow: int = Field(default=0, ge=0, description="Post-warmup jobs served on slow servers")
    observed_time: float = Field(default=0.0, ge=0.0, description="Length of the post-warmup observation window")
    mean_number_by_third: list[float] = Field(default_factory=list, description="Time-averaged jobs in system per third")
    arrivals_processed: int = Field(ge=0)
    warmup_discarded: int = Field(ge=0)
    seed: int = Field(description="Master seed")
    unstable_flag: bool = Field(default=False, description="Jobs in system grew across the run")


class OracleMetrics(BaseModel):
    """Exact stationary metrics of a small finite farm."""
    model_config = ConfigDict(frozen=True)

    mean_T: float = Field(gt=0.0)
    busy_fast: float = Field(ge=0.0, le=1.0)
    busy_slow: float = Field(ge=0.0, le=1.0)
    pmf_fast: list[float] = Field(description="P(a fast server holds exactly i jobs)")
    pmf_slow: list[float] = Field(description="P(a slow server holds exactly i jobs)")
    cap_mass: float = Field(ge=0.0, description="Stationary mass of states with a queue at the cap")
    num_states: int = Field(ge=1)
    residual: float = Field(ge=0.0, description="Max-norm of pi Q")


# =============================================================================
# Experiment sweeps
# =============================================================================

class RecipeName(str, Enum):
    """Named experiment recipes that regenerate the figure and table data."""
    CONVERGENCE = "convergence"
    RESPONSE_GRID = "response_grid"
    QUEUE_DISTS = "queue_dists"
    POWER_OF_TWO = "power_of_two"
    VARY_D = "vary_d"
    PF_PS_SURFACE = "pf_ps_surface"
    HEURISTIC_TABLE = "heuristic_table"


class ExperimentRecipe(BaseModel):
    """A recipe plus the overrides that fully determine its sweep."""
    model_config = ConfigDict(frozen=True)

    name: RecipeName
    overrides: dict[str, Any] = Field(default_factory=dict, description="Partial config/policy overrides")
    output_dir: Path = Field(default=Path("results"), description="Directory for CSV, manifest and plots")


class SweepCell(BaseModel):
    """One independent unit of work in a recipe sweep."""
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0, description="Position in the recipe's deterministic cell order")
    task: str = Field(description="Evaluator name (e.g., 'analytic', 'simulate', 'heuristic_row')")
    params: dict[str, Any] = Field(default_factory=dict)


# Reducer functions for parallel state aggregation
def merge_rows(left: list, right: list) -> list:
    """Concatenate result rows and keep them in cell order, so merging is order independent."""
    if not left:
        return sorted(right or [], key=lambda row: (row["cell"], row.get("seq", 0)))
    if not right:
        return left
    return sorted(left + right, key=lambda row: (row["cell"], row.get("seq", 0)))


def append_issues(left: list, right: list) -> list:
    """Append diagnostics from parallel workers."""
    if not left:
        return right or []
    if not right:
        return left
    return left + right


class SweepState(TypedDict, total=False):
    """
    TypedDict-based state for the parallel sweep graph.

    Rows and diagnostics arriving from concurrent cells are merged by the
    reducers; everything else is written once.
    """
    # Input (set once)
    recipe: ExperimentRecipe
    seed: int
    settings: dict[str, Any]  # SolverSettings.model_dump()
    format: str
    write_outputs: bool

    # Set by the router
    cells: list[SweepCell]

    # Merged from parallel evaluators
    rows: Annotated[list[dict[str, Any]], merge_rows]
    diagnostics: Annotated[list[SolverDiagnostic], append_issues]

    # Set by the collector
    written_files: list[str]


class CellState(TypedDict, total=False):
    """State passed to a single evaluator via Send()."""
    cell: SweepCell
    seed: int
    settings: dict[str, Any]
