"""Command-line entry point for hetero-dispatch.

Exit codes:
    0: Success
    1: Usage or configuration error
    2: The parameters describe an unstable system (no stable fixed point,
       divergent tail, or every candidate policy infeasible)
"""

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from hetero_dispatch import __version__
from hetero_dispatch.analysis import jiq, jsq, optimizer
from hetero_dispatch.analysis.fixedpoint import rho_fixed_point, solve_jiq_system
from hetero_dispatch.errors import AllInfeasible, ConfigError, DispatchAnalysisError, InfeasibleParameters
from hetero_dispatch.experiments.output import load_manifest, write_rows
from hetero_dispatch.experiments.sweep_graph import run_recipe
from hetero_dispatch.models import (
    DispatchPolicy,
    ExperimentRecipe,
    OptResult,
    PolicyFamily,
    PolicyKind,
    PolicyParams,
    RecipeName,
    ServiceKind,
    SimReport,
    SolverDiagnostic,
)
from hetero_dispatch.oracle import exact_metrics
from hetero_dispatch.settings import RunConfig, load_run_config
from hetero_dispatch.simulation import engine
from hetero_dispatch.simulation.stats import histogram_rows

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_CAP = 40

Row = dict[str, Any]


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigError (exit 1) instead of exiting 2."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _d_pair(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected dF,dS or d, got '{text}'") from None
    if len(values) not in (1, 2) or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected dF,dS or d with positive integers, got '{text}'")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    model = common.add_argument_group("model")
    model.add_argument("--config", help="YAML or JSON run-config file; flags override its values")
    model.add_argument("--lambda", dest="lam", type=float, help="Arrival rate per server")
    model.add_argument("--qf", type=float, help="Fraction of fast servers")
    model.add_argument("--r", type=float, help="Speed ratio mu_fast / mu_slow")
    model.add_argument("--k", help="Number of servers, or 'inf' for the mean-field limit")
    model.add_argument("--d", type=_d_pair, help="Queried servers: 'dF,dS', or a total d")
    model.add_argument("--pf", type=float, help="Probability of queueing at a busy fast server")
    model.add_argument("--ps", type=float, help="Probability of using an idle slow server")
    model.add_argument("--family", choices=[f.value for f in PolicyFamily])
    model.add_argument("--service", help="exp, det, erlang:K or hyper:CV2")

    run = common.add_argument_group("run")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", help="Output directory (stdout when omitted)")
    run.add_argument("--format", choices=["csv", "json"], help="Output format")
    run.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    run.add_argument("-q", "--quiet", action="store_true", help="Errors only")

    parser = _Parser(prog="hetero-dispatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", parents=[common], help="Mean-field (or exact finite-k) E[T] at one point")
    solve.add_argument("--cap", type=int, default=DEFAULT_CAP, help="Queue cap for the finite-k exact solve")
    solve.set_defaults(handler=cmd_solve)

    optimize = sub.add_parser("optimize", parents=[common], help="Optimal (pF, pS) by grid search")
    optimize.set_defaults(handler=cmd_optimize)

    heuristic = sub.add_parser("heuristic", parents=[common], help="Seven-candidate heuristic vs the optimum")
    heuristic.set_defaults(handler=cmd_heuristic)

    simulate = sub.add_parser("simulate", parents=[common], help="Discrete-event simulation of a finite farm")
    simulate.add_argument("--policy", choices=[k.value for k in PolicyKind])
    simulate.add_argument("--arrivals", type=int, default=1_000_000, help="Total arrivals including warmup")
    simulate.add_argument("--warmup", type=int, default=100_000, help="Arrivals discarded before measuring")
    simulate.set_defaults(handler=cmd_simulate)

    experiment = sub.add_parser("experiment", parents=[common], help="Regenerate a figure or table's data")
    experiment.add_argument("recipe", nargs="?", choices=[r.value for r in RecipeName])
    experiment.add_argument("--manifest", help="Replay the recipe, seed and settings of a previous run")
    experiment.add_argument("--lambdas", help="Comma-separated arrival rates for lambda sweeps")
    experiment.add_argument("--arrivals", type=int, help="Arrivals per simulated cell")
    experiment.add_argument("--warmup", type=int, help="Warmup arrivals per simulated cell")
    experiment.add_argument("--no-simulate", action="store_true", help="Analytic cells only")
    experiment.set_defaults(handler=cmd_experiment)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


# =============================================================================
# Inputs and outputs
# =============================================================================

def _run_config(args: argparse.Namespace) -> RunConfig:
    base = load_run_config(args.config) if args.config else RunConfig()
    d = args.d or ()
    overrides = {
        "lambda": args.lam,
        "q_fast": args.qf,
        "speed_ratio": args.r,
        "k": args.k,
        "d_fast": d[0] if len(d) == 2 else None,
        "d_slow": d[1] if len(d) == 2 else None,
        "p_fast": args.pf,
        "p_slow": args.ps,
        "family": args.family,
        "service_kind": args.service,
    }
    try:
        return base.merged(overrides)
    except ValidationError as exc:
        raise ConfigError(str(exc.errors()[0].get("msg", exc))) from exc


def _input_columns(run: RunConfig, policy: PolicyParams | None = None) -> Row:
    row: Row = {
        "lambda": run.lam,
        "q_fast": run.q_fast,
        "speed_ratio": run.speed_ratio,
        "k": run.k if run.k is not None else "inf",
    }
    if policy is not None:
        row |= {
            "family": policy.family.value,
            "d_fast": policy.d_fast,
            "d_slow": policy.d_slow,
            "p_fast": policy.p_fast,
            "p_slow": policy.p_slow,
        }
    return row


def _log_diagnostics(diagnostics: list[SolverDiagnostic]) -> None:
    for diag in diagnostics:
        logger.warning("[%s] %s: %s", diag.severity.value.upper(), diag.code, diag.message)


def _render(rows: list[Row], fmt: str | None, headline: str | None) -> str:
    if fmt == "json":
        return json.dumps(rows[0] if len(rows) == 1 else rows, indent=2, default=str)
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), restval="", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buffer.getvalue().rstrip("\n")
    lines = []
    for row in rows:
        if headline and row.get(headline) is not None:
            lines.append(f"E[T]={row[headline]:.6g}")
        lines.extend(f"{key}={value}" for key, value in row.items() if key != headline)
    return "\n".join(lines)


def _emit(args: argparse.Namespace, name: str, rows: list[Row], headline: str | None = "mean_T") -> list[Path]:
    """Print rows, or write them to ``--out`` as ``<name>.csv`` / ``<name>.json``."""
    if not args.out:
        print(_render(rows, args.format, headline))
        return []
    fmt = args.format or "csv"
    path = write_rows(rows, Path(args.out) / f"{name}.{fmt}", fmt)
    logger.info("Wrote %s", path)
    return [path]


def _opt_columns(result: OptResult) -> Row:
    return {
        "family": result.family.value,
        "d_fast": result.d_fast,
        "d_slow": result.d_slow,
        "p_fast_opt": result.p_fast_opt,
        "p_slow_opt": result.p_slow_opt,
        "et_opt": result.et_opt,
        "feasible_fraction": result.feasible_fraction,
        "method": result.method.value,
    }


# =============================================================================
# Commands
# =============================================================================

def cmd_solve(args: argparse.Namespace) -> int:
    """E[T] and the fixed point at one parameter point (exact CTMC when k is finite)."""
    run = _run_config(args)
    config = run.system()
    policy = run.policy()
    dist = run.service()
    row = _input_columns(run, policy) | {"service": dist.spec_string()}

    if not config.is_mean_field:
        if dist.kind is not ServiceKind.EXPONENTIAL:
            raise ConfigError("The exact finite-k solve supports exponential service only")
        metrics = exact_metrics(config, policy, args.cap, run.settings)
        row |= {
            "mean_T": metrics.mean_T,
            "busy_fast": metrics.busy_fast,
            "busy_slow": metrics.busy_slow,
            "cap": args.cap,
            "cap_mass": metrics.cap_mass,
            "num_states": metrics.num_states,
        }
    elif policy.family is PolicyFamily.JIQ:
        fp = solve_jiq_system(config, policy, run.settings)
        _log_diagnostics(fp.diagnostics)
        exponential = dist.kind is ServiceKind.EXPONENTIAL
        row |= {
            "mean_T": jiq.mean_response_exponential(config, fp) if exponential
            else jiq.mean_response_general(config, fp, dist),
            "rho_fast": fp.rho_fast,
            "rho_slow": fp.rho_slow,
            "pi0_fast": fp.pi0_fast,
            "pi0_slow": fp.pi0_slow,
            "lam_idle_fast": fp.lam_idle_fast,
            "lam_busy_fast": fp.lam_busy_fast,
            "lam_idle_slow": fp.lam_idle_slow,
            "lam_busy_slow": fp.lam_busy_slow,
            "iterations": fp.iterations,
        }
    else:
        if dist.kind is not ServiceKind.EXPONENTIAL:
            raise ConfigError("JSQ-(dF,dS) analysis supports exponential service only")
        fp = rho_fixed_point(config, policy, run.settings)
        _log_diagnostics(fp.diagnostics)
        row |= {
            "mean_T": jsq.mean_response(config, policy, run.settings),
            "rho_fast": fp.rho_fast,
            "rho_slow": fp.rho_slow,
            "iterations": fp.iterations,
        }
    _emit(args, "solve", [row])
    return 0


def _optimize(args: argparse.Namespace, run: RunConfig) -> OptResult:
    config = run.system()
    family = run.family or PolicyFamily.JIQ
    dist = run.service()
    if args.d is not None and len(args.d) == 1:
        return optimizer.best_split_for_d(config, family, args.d[0], dist, run.settings)
    policy = run.policy()
    return optimizer.optimize(config, family, policy.d_fast, policy.d_slow, dist, run.settings)


def cmd_optimize(args: argparse.Namespace) -> int:
    """Optimal (pF, pS); a single --d value also searches every (dF, dS) split."""
    run = _run_config(args)
    result = _optimize(args, run)
    _log_diagnostics(result.diagnostics)
    _emit(args, "optimize", [_input_columns(run) | _opt_columns(result)], headline="et_opt")
    return 0


def cmd_heuristic(args: argparse.Namespace) -> int:
    """Heuristic candidate choice next to the optimum, with the percentage gap."""
    run = _run_config(args)
    config = run.system()
    policy = run.policy()
    dist = run.service()
    best = optimizer.optimize(config, policy.family, policy.d_fast, policy.d_slow, dist, run.settings)
    heur = optimizer.heuristic(config, policy.family, policy.d_fast, policy.d_slow, dist, run.settings)
    row = _input_columns(run) | {
        "family": policy.family.value,
        "d_fast": policy.d_fast,
        "d_slow": policy.d_slow,
        "p_fast_opt": best.p_fast_opt,
        "p_slow_opt": best.p_slow_opt,
        "et_opt": best.et_opt,
        "p_fast_heur": heur.p_fast_opt,
        "p_slow_heur": heur.p_slow_opt,
        "et_heur": heur.et_opt,
        "pct_error": optimizer.relative_gap(heur, best),
    }
    _emit(args, "heuristic", [row], headline="et_heur")
    return 0


def _dispatch_policy(args: argparse.Namespace, params: PolicyParams) -> DispatchPolicy:
    default = PolicyKind.JIQ_DFDS if params.family is PolicyFamily.JIQ else PolicyKind.JSQ_DFDS
    kind = PolicyKind(args.policy) if args.policy else default
    match kind:
        case PolicyKind.JIQ_DFDS | PolicyKind.JSQ_DFDS:
            return DispatchPolicy.from_params(params).model_copy(update={"kind": kind})
        case PolicyKind.JSQ_D | PolicyKind.SED_D | PolicyKind.WJSQ_D:
            d = sum(args.d) if args.d else params.d_fast + params.d_slow
            return DispatchPolicy(kind=kind, d=d)
        case PolicyKind.RANDOM:
            return DispatchPolicy(kind=kind, split_p_fast=args.pf)
    return DispatchPolicy(kind=kind)


def cmd_simulate(args: argparse.Namespace) -> int:
    """Simulate a finite farm and report E[T], busy fractions and histograms."""
    run = _run_config(args)
    config = run.system()
    if config.is_mean_field:
        raise ConfigError("simulate needs a finite --k")
    policy = _dispatch_policy(args, run.policy())
    report = engine.run(config, policy, run.service(), args.arrivals, args.warmup, args.seed)
    if report.unstable_flag:
        logger.warning("%s looks unstable: mean jobs in system by third %s", policy.label, report.mean_number_by_third)

    if args.format == "json":
        payload = json.dumps(report.model_dump(mode="json"), indent=2)
        if not args.out:
            print(payload)
            return 0
        path = Path(args.out) / "simulate.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(payload + "\n", encoding="utf-8")
        return 0

    written = _emit(args, "simulate", [_sim_summary(run, report)])
    if args.out:
        try:
            write_rows(histogram_rows(report), Path(args.out) / "histogram.csv", "csv")
        except BaseException:
            for path in written:
                path.unlink(missing_ok=True)
            raise
    return 0


def _sim_summary(run: RunConfig, report: SimReport) -> Row:
    return _input_columns(run) | {
        "policy": report.policy,
        "mean_T": report.mean_T,
        "ci_halfwidth_99": report.ci_halfwidth_99,
        "busy_fast": report.busy_fast,
        "busy_slow": report.busy_slow,
        "completed_fast": report.completed_fast,
        "completed_slow": report.completed_slow,
        "arrivals_processed": report.arrivals_processed,
        "warmup_discarded": report.warmup_discarded,
        "seed": report.seed,
        "unstable": report.unstable_flag,
    }


def cmd_experiment(args: argparse.Namespace) -> int:
    """Run a named recipe (or replay a manifest) through the sweep graph."""
    if args.manifest:
        recipe, seed, settings, fmt = load_manifest(args.manifest)
        if args.out:
            recipe = recipe.model_copy(update={"output_dir": Path(args.out)})
    else:
        if args.recipe is None:
            raise ConfigError("experiment needs a recipe name or --manifest")
        run = _run_config(args)
        overrides = {
            "lambda": run.lam,
            "q_fast": run.q_fast,
            "speed_ratio": run.speed_ratio,
            "k": None if run.k in (None, "inf") else run.k,
            "lambdas": args.lambdas,
            "arrivals": args.arrivals,
            "warmup": args.warmup,
            "simulate": False if args.no_simulate else None,
        }
        recipe = ExperimentRecipe(
            name=RecipeName(args.recipe),
            overrides={key: value for key, value in overrides.items() if value is not None},
            output_dir=Path(args.out or "results"),
        )
        seed, settings, fmt = args.seed, run.settings, args.format or "csv"

    state = run_recipe(recipe, seed=seed, settings=settings, fmt=fmt)
    diagnostics = sorted(state.get("diagnostics", []), key=lambda d: (d.context.get("cell", -1.0), d.code))
    _log_diagnostics(diagnostics)
    for path in state.get("written_files", []):
        print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    """
    CLI entry point.

    Returns:
        Exit code (see module docstring)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    configure_logging(args.verbose, args.quiet)

    try:
        return args.handler(args)
    except (InfeasibleParameters, AllInfeasible) as exc:
        logger.error("Infeasible parameters: %s", exc)
        return 2
    except ValidationError as exc:
        logger.error("Invalid parameters: %s", exc.errors()[0].get("msg", exc))
        return 1
    except DispatchAnalysisError as exc:
        logger.error("%s", exc)
        return 1


def run() -> None:
    """Console-script wrapper."""
    sys.exit(main())


if __name__ == "__main__":
    run()
