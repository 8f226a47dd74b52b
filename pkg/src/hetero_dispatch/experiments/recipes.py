"""
Experiment recipes: parameter sweeps that regenerate the figure and table data.

A recipe expands into an ordered list of independent ``SweepCell``s. Each
cell names an evaluator in ``EVALUATORS`` and carries plain parameters, so
cells can run concurrently and in any order; every evaluator returns rows
tagged with the cell index (and a ``seq`` number when it emits several).
"""

import logging
from collections.abc import Callable
from functools import lru_cache
from typing import Any

import numpy as np

from hetero_dispatch.analysis import jiq, jsq, optimizer
from hetero_dispatch.analysis.fixedpoint import rho_fixed_point
from hetero_dispatch.errors import AllInfeasible, ConfigError, InfeasibleParameters
from hetero_dispatch.models import (
    DiagnosticSeverity,
    DispatchPolicy,
    ExperimentRecipe,
    OptResult,
    PolicyFamily,
    PolicyKind,
    PolicyParams,
    RecipeName,
    ServerClass,
    SimReport,
    SolverDiagnostic,
    SweepCell,
    SystemConfig,
)
from hetero_dispatch.settings import SolverSettings
from hetero_dispatch.simulation import engine

logger = logging.getLogger(__name__)

Row = dict[str, Any]
Evaluator = Callable[[SweepCell, int, SolverSettings], tuple[list[Row], list[SolverDiagnostic]]]

# Overrides every recipe understands, with the value type they are coerced to
OVERRIDE_KEYS: dict[str, type] = {
    "lambda": float,
    "lambdas": list,
    "q_fast": float,
    "speed_ratio": float,
    "k": int,
    "arrivals": int,
    "warmup": int,
    "simulate": bool,
    "surface_step": float,
}

DEFAULT_LAMBDAS = [round(0.05 * i, 2) for i in range(1, 20)]
TABLE_LAMBDAS = [0.14, 0.24, 0.34, 0.44, 0.54, 0.64, 0.74, 0.84, 0.90, 0.98]
FAMILIES = (PolicyFamily.JIQ, PolicyFamily.JSQ)


def check_overrides(overrides: dict[str, Any]) -> dict[str, Any]:
    """
    Validate and coerce recipe overrides.

    Raises:
        ConfigError: For unknown keys or values of the wrong type
    """
    clean: dict[str, Any] = {}
    for key, value in overrides.items():
        kind = OVERRIDE_KEYS.get(key)
        if kind is None:
            raise ConfigError(f"Unknown recipe override '{key}' (known: {', '.join(sorted(OVERRIDE_KEYS))})")
        try:
            if kind is list:
                clean[key] = [float(v) for v in (value.split(",") if isinstance(value, str) else value)]
            elif kind is bool and isinstance(value, str):
                clean[key] = value.strip().lower() in ("1", "true", "yes")
            else:
                clean[key] = kind(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Override {key}={value!r} is not a valid {kind.__name__}") from exc
    return clean


def cell_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for one cell, derived from the sweep seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


# =============================================================================
# Cell construction
# =============================================================================

class _CellList:
    """Accumulates cells in a deterministic order."""

    def __init__(self) -> None:
        self.cells: list[SweepCell] = []

    def add(self, task: str, **params: Any) -> None:
        self.cells.append(SweepCell(index=len(self.cells), task=task, params=params))


def _sim_params(overrides: dict[str, Any], default_k: int, default_arrivals: int) -> dict[str, Any]:
    arrivals = overrides.get("arrivals", default_arrivals)
    return {
        "k": overrides.get("k", default_k),
        "arrivals": arrivals,
        "warmup": overrides.get("warmup", arrivals // 10),
    }


def _convergence(overrides: dict[str, Any]) -> list[SweepCell]:
    cells = _CellList()
    system = {
        "lam": overrides.get("lambda", 0.74),
        "q_fast": overrides.get("q_fast", 0.5),
        "speed_ratio": overrides.get("speed_ratio", 10.0),
    }
    sim = _sim_params(overrides, 0, 1_000_000)
    for family in FAMILIES:
        cells.add("analytic", **system, family=family.value, d_fast=2, d_slow=2)
        if overrides.get("simulate", True):
            for k in (10, 50, 100, 500, 1000):
                cells.add("simulate_optimized", **system, **(sim | {"k": k}), family=family.value, d_fast=2, d_slow=2)
    return cells.cells


def _baselines(d: int) -> list[dict[str, Any]]:
    return [
        {"kind": PolicyKind.JSQ_D.value, "d": d},
        {"kind": PolicyKind.SED_D.value, "d": d},
        {"kind": PolicyKind.WJSQ_D.value, "d": d},
    ]


# WJSQ-d is left out of the response panels
RESPONSE_GRID_BASELINES: list[dict[str, Any]] = [
    {"kind": PolicyKind.JSQ_D.value, "d": 4},
    {"kind": PolicyKind.SED_D.value, "d": 4},
    {"kind": PolicyKind.JIQ_GLOBAL.value},
]


def _response_grid(overrides: dict[str, Any]) -> list[SweepCell]:
    cells = _CellList()
    lambdas = overrides.get("lambdas", DEFAULT_LAMBDAS)
    sim = _sim_params(overrides, 100, 200_000)
    ratios = [overrides["speed_ratio"]] if "speed_ratio" in overrides else [1.1, 2.0, 5.0, 10.0]
    fractions = [overrides["q_fast"]] if "q_fast" in overrides else [0.2, 0.5, 0.8]
    for r in ratios:
        for q_fast in fractions:
            for lam in lambdas:
                system = {"lam": lam, "q_fast": q_fast, "speed_ratio": r}
                for family in FAMILIES:
                    cells.add("analytic", **system, family=family.value, d_fast=2, d_slow=2)
                if overrides.get("simulate", True):
                    for policy in RESPONSE_GRID_BASELINES:
                        cells.add("simulate", **system, **sim, policy=policy)
    return cells.cells


QUEUE_DIST_SETTINGS = [(1.1, 0.5), (5.0, 0.8), (10.0, 0.2)]


def _queue_dists(overrides: dict[str, Any]) -> list[SweepCell]:
    cells = _CellList()
    q_fast = overrides.get("q_fast", 0.5)
    sim = _sim_params(overrides, 1000, 1_000_000)
    for r, lam in QUEUE_DIST_SETTINGS:
        system = {"lam": overrides.get("lambda", lam), "q_fast": q_fast, "speed_ratio": overrides.get("speed_ratio", r)}
        for family in FAMILIES:
            cells.add("queue_dist", **system, family=family.value, d_fast=2, d_slow=2)
        if overrides.get("simulate", True):
            cells.add("simulate_hist", **system, **sim, policy={"kind": PolicyKind.JIQ_GLOBAL.value})
    return cells.cells


def _power_of_two(overrides: dict[str, Any]) -> list[SweepCell]:
    cells = _CellList()
    lambdas = overrides.get("lambdas", DEFAULT_LAMBDAS)
    sim = _sim_params(overrides, 100, 200_000)
    fractions = [overrides["q_fast"]] if "q_fast" in overrides else [0.2, 0.8]
    for q_fast in fractions:
        for lam in lambdas:
            system = {"lam": lam, "q_fast": q_fast, "speed_ratio": overrides.get("speed_ratio", 5.0)}
            cells.add("analytic", **system, family=PolicyFamily.JIQ.value, d_fast=1, d_slow=1)
            if overrides.get("simulate", True):
                for policy in _baselines(2):
                    cells.add("simulate", **system, **sim, policy=policy)
    return cells.cells


def _vary_d(overrides: dict[str, Any]) -> list[SweepCell]:
    cells = _CellList()
    sim = _sim_params(overrides, 100, 200_000)
    for q_fast, r in ((0.5, 1.1), (0.2, 10.0)):
        system = {
            "lam": overrides.get("lambda", 0.8),
            "q_fast": overrides.get("q_fast", q_fast),
            "speed_ratio": overrides.get("speed_ratio", r),
        }
        for d in range(1, 9):
            for family in FAMILIES:
                cells.add("best_split", **system, family=family.value, d=d)
            if overrides.get("simulate", True):
                for policy in _baselines(d):
                    cells.add("simulate", **system, **sim, policy=policy)
    return cells.cells


def _pf_ps_surface(overrides: dict[str, Any]) -> list[SweepCell]:
    cells = _CellList()
    step = overrides.get("surface_step", 1.0 / 32.0)
    n = round(1.0 / step)
    for q_fast, r, lam in ((0.2, 5.0, 0.56), (0.5, 2.0, 0.95)):
        system = {
            "lam": overrides.get("lambda", lam),
            "q_fast": overrides.get("q_fast", q_fast),
            "speed_ratio": overrides.get("speed_ratio", r),
        }
        for j in range(n + 1):
            cells.add("surface_row", **system, family=PolicyFamily.JSQ.value, d_fast=2, d_slow=2, p_slow=j / n, n=n)
    return cells.cells


def _heuristic_table(overrides: dict[str, Any]) -> list[SweepCell]:
    cells = _CellList()
    lambdas = overrides.get("lambdas", TABLE_LAMBDAS)
    for family in FAMILIES:
        for lam in lambdas:
            cells.add(
                "heuristic_row",
                lam=lam,
                q_fast=overrides.get("q_fast", 0.2),
                speed_ratio=overrides.get("speed_ratio", 5.0),
                family=family.value,
                d_fast=2,
                d_slow=2,
            )
    return cells.cells


RECIPES: dict[RecipeName, Callable[[dict[str, Any]], list[SweepCell]]] = {
    RecipeName.CONVERGENCE: _convergence,
    RecipeName.RESPONSE_GRID: _response_grid,
    RecipeName.QUEUE_DISTS: _queue_dists,
    RecipeName.POWER_OF_TWO: _power_of_two,
    RecipeName.VARY_D: _vary_d,
    RecipeName.PF_PS_SURFACE: _pf_ps_surface,
    RecipeName.HEURISTIC_TABLE: _heuristic_table,
}


def build_cells(recipe: ExperimentRecipe) -> list[SweepCell]:
    """Expand a recipe into its ordered cells."""
    return RECIPES[recipe.name](check_overrides(recipe.overrides))


# =============================================================================
# Evaluators
# =============================================================================

def _config(params: dict[str, Any], with_k: bool = False) -> SystemConfig:
    return SystemConfig(
        lam=params["lam"],
        q_fast=params["q_fast"],
        speed_ratio=params["speed_ratio"],
        num_servers=params["k"] if with_k else None,
    )


def _system_columns(config: SystemConfig) -> Row:
    return {"lambda": config.lam, "q_fast": config.q_fast, "speed_ratio": config.speed_ratio}


def _infeasible(cell: SweepCell, exc: Exception) -> SolverDiagnostic:
    return SolverDiagnostic(
        severity=DiagnosticSeverity.WARNING,
        code="INFEASIBLE_CELL",
        message=f"{cell.task} cell {cell.index}: {exc}",
        context={"cell": float(cell.index)},
    )


def _tag(cell: SweepCell, diagnostics: list[SolverDiagnostic]) -> list[SolverDiagnostic]:
    return [d.model_copy(update={"context": {**d.context, "cell": float(cell.index)}}) for d in diagnostics]


@lru_cache(maxsize=256)
def _optimized(
    config: SystemConfig, family: PolicyFamily, d_fast: int, d_slow: int, settings: SolverSettings
) -> OptResult:
    """Optimization shared by analytic and simulation cells of the same point."""
    return optimizer.optimize(config, family, d_fast, d_slow, settings=settings)


def _analytic(cell: SweepCell, seed: int, settings: SolverSettings) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p)
    family = PolicyFamily(p["family"])
    label = f"{family.value.upper()}-({p['d_fast']},{p['d_slow']})"
    row: Row = {
        "cell": cell.index,
        **_system_columns(config),
        "policy": label,
        "family": family.value,
        "d_fast": p["d_fast"],
        "d_slow": p["d_slow"],
        "source": "analytic",
    }
    try:
        result = _optimized(config, family, p["d_fast"], p["d_slow"], settings)
    except (AllInfeasible, InfeasibleParameters) as exc:
        return [row | {"mean_T": None, "status": "infeasible"}], [_infeasible(cell, exc)]
    row |= {
        "p_fast": result.p_fast_opt,
        "p_slow": result.p_slow_opt,
        "mean_T": result.et_opt,
        "status": "ok",
    }
    return [row], _tag(cell, result.diagnostics)


def _report_row(cell: SweepCell, config: SystemConfig, label: str, seed: int, report: SimReport) -> Row:
    return {
        "cell": cell.index,
        **_system_columns(config),
        "k": config.num_servers,
        "policy": label,
        "source": "simulation",
        "mean_T": report.mean_T,
        "ci_halfwidth_99": report.ci_halfwidth_99,
        "busy_fast": report.busy_fast,
        "busy_slow": report.busy_slow,
        "unstable": report.unstable_flag,
        "seed": seed,
        "status": "unstable" if report.unstable_flag else "ok",
    }


def _simulate(cell: SweepCell, seed: int, settings: SolverSettings) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p, with_k=True)
    policy = DispatchPolicy.model_validate(p["policy"])
    report = engine.run(config, policy, horizon_arrivals=p["arrivals"], warmup_arrivals=p["warmup"], seed=seed)
    return [_report_row(cell, config, policy.label, seed, report)], []


def _simulate_optimized(
    cell: SweepCell, seed: int, settings: SolverSettings
) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p, with_k=True)
    family = PolicyFamily(p["family"])
    try:
        result = _optimized(config.with_servers(None), family, p["d_fast"], p["d_slow"], settings)
    except (AllInfeasible, InfeasibleParameters) as exc:
        return [], [_infeasible(cell, exc)]
    params = PolicyParams(
        d_fast=p["d_fast"], d_slow=p["d_slow"], p_fast=result.p_fast_opt, p_slow=result.p_slow_opt, family=family
    )
    policy = DispatchPolicy.from_params(params)
    report = engine.run(config, policy, horizon_arrivals=p["arrivals"], warmup_arrivals=p["warmup"], seed=seed)
    row = _report_row(cell, config, policy.label, seed, report)
    return [row | {"p_fast": params.p_fast, "p_slow": params.p_slow}], []


def _survival_rows(cell: SweepCell, config: SystemConfig, label: str, source: str, survival: dict[str, list[float]]) -> list[Row]:
    rows = []
    seq = 0
    for server_class, values in survival.items():
        for i, value in enumerate(values):
            rows.append({
                "cell": cell.index,
                "seq": seq,
                **_system_columns(config),
                "policy": label,
                "source": source,
                "class": server_class,
                "i": i,
                "frac_at_least_i": value,
            })
            seq += 1
    return rows


def _queue_dist(cell: SweepCell, seed: int, settings: SolverSettings) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p)
    family = PolicyFamily(p["family"])
    try:
        result = _optimized(config, family, p["d_fast"], p["d_slow"], settings)
        params = PolicyParams(
            d_fast=p["d_fast"], d_slow=p["d_slow"], p_fast=result.p_fast_opt, p_slow=result.p_slow_opt, family=family
        )
        if family is PolicyFamily.JSQ:
            fp = rho_fixed_point(config, params, settings)
            rho = (fp.rho_fast, fp.rho_slow)
            survival = {
                ServerClass.FAST.value: list(jsq.fast_tail(config, params, rho, settings).tail),
                ServerClass.SLOW.value: list(jsq.slow_tail(config, params, rho, settings).tail),
            }
        else:
            fp = jiq.solve_jiq_system(config, params, settings)
            survival = {}
            for server_class in (ServerClass.FAST, ServerClass.SLOW):
                dist = jiq.tagged_queue(config, fp, server_class)
                length = len(jiq.pmf_table(dist, settings))
                survival[server_class.value] = [jiq.queue_survival(dist, i) for i in range(length)]
    except (AllInfeasible, InfeasibleParameters) as exc:
        return [], [_infeasible(cell, exc)]
    label = f"{family.value.upper()}-({p['d_fast']},{p['d_slow']})"
    return _survival_rows(cell, config, label, "analytic", survival), []


def _simulate_hist(cell: SweepCell, seed: int, settings: SolverSettings) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p, with_k=True)
    policy = DispatchPolicy.model_validate(p["policy"])
    report = engine.run(config, policy, horizon_arrivals=p["arrivals"], warmup_arrivals=p["warmup"], seed=seed)
    survival = {
        ServerClass.FAST.value: [b.frac_at_least for b in report.hist_fast],
        ServerClass.SLOW.value: [b.frac_at_least for b in report.hist_slow],
    }
    return _survival_rows(cell, config, policy.label, "simulation", survival), []


def _best_split(cell: SweepCell, seed: int, settings: SolverSettings) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p)
    family = PolicyFamily(p["family"])
    row: Row = {"cell": cell.index, **_system_columns(config), "policy": f"{family.value.upper()}-(dF,dS)", "d": p["d"]}
    try:
        result = optimizer.best_split_for_d(config, family, p["d"], settings=settings)
    except (AllInfeasible, InfeasibleParameters) as exc:
        return [row | {"mean_T": None, "status": "infeasible"}], [_infeasible(cell, exc)]
    row |= {
        "d_fast": result.d_fast,
        "d_slow": result.d_slow,
        "p_fast": result.p_fast_opt,
        "p_slow": result.p_slow_opt,
        "mean_T": result.et_opt,
        "status": "ok",
    }
    return [row], []


def _surface_row(cell: SweepCell, seed: int, settings: SolverSettings) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p)
    family = PolicyFamily(p["family"])
    surface_settings = settings.model_copy(update={"scan_multiplicity": False})
    rows = []
    for j in range(p["n"] + 1):
        params = PolicyParams(d_fast=p["d_fast"], d_slow=p["d_slow"], p_fast=j / p["n"], p_slow=p["p_slow"], family=family)
        try:
            et = optimizer.evaluate(config, params, settings=surface_settings)
        except InfeasibleParameters:
            et = None
        rows.append({
            "cell": cell.index,
            "seq": j,
            **_system_columns(config),
            "p_fast": params.p_fast,
            "p_slow": params.p_slow,
            "mean_T": et,
        })
    return rows, []


def _heuristic_row(cell: SweepCell, seed: int, settings: SolverSettings) -> tuple[list[Row], list[SolverDiagnostic]]:
    p = cell.params
    config = _config(p)
    family = PolicyFamily(p["family"])
    row: Row = {"cell": cell.index, "family": family.value, **_system_columns(config)}
    try:
        best = _optimized(config, family, p["d_fast"], p["d_slow"], settings)
        heur = optimizer.heuristic(config, family, p["d_fast"], p["d_slow"], settings=settings)
    except (AllInfeasible, InfeasibleParameters) as exc:
        return [row | {"status": "infeasible"}], [_infeasible(cell, exc)]
    row |= {
        "p_fast_opt": best.p_fast_opt,
        "p_slow_opt": best.p_slow_opt,
        "et_opt": best.et_opt,
        "p_fast_heur": heur.p_fast_opt,
        "p_slow_heur": heur.p_slow_opt,
        "et_heur": heur.et_opt,
        "pct_error": optimizer.relative_gap(heur, best),
        "status": "ok",
    }
    return [row], _tag(cell, best.diagnostics)


EVALUATORS: dict[str, Evaluator] = {
    "analytic": _analytic,
    "simulate": _simulate,
    "simulate_optimized": _simulate_optimized,
    "queue_dist": _queue_dist,
    "simulate_hist": _simulate_hist,
    "best_split": _best_split,
    "surface_row": _surface_row,
    "heuristic_row": _heuristic_row,
}


def evaluate_cell(
    cell: SweepCell, seed: int, settings: SolverSettings
) -> tuple[list[Row], list[SolverDiagnostic]]:
    """
    Run one cell's evaluator.

    Infeasible analytic points become rows with status 'infeasible' and an
    INFEASIBLE_CELL diagnostic instead of failing the sweep.

    Raises:
        ConfigError: If the cell names an unknown evaluator or invalid parameters
    """
    evaluator = EVALUATORS.get(cell.task)
    if evaluator is None:
        raise ConfigError(f"Unknown cell task '{cell.task}'")
    logger.debug("Evaluating cell %d (%s)", cell.index, cell.task)
    return evaluator(cell, cell_seed(seed, cell.index), settings)
