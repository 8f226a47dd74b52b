"""LangGraph definition using Send() for concurrent sweep cells.

The router expands a recipe into cells, ``dispatch_cells`` fans out one
``evaluate_cell`` worker per cell, and the reducers on ``SweepState``
merge rows and diagnostics in cell order whatever order the workers finish
in. The collector is the only node that touches the filesystem.
"""

import logging
from typing import Literal, Sequence

from langgraph.graph import END, START, StateGraph
from langgraph.types import Send

from hetero_dispatch.experiments.output import (
    build_manifest,
    plot_rows,
    write_manifest,
    write_rows,
)
from hetero_dispatch.experiments.recipes import build_cells, evaluate_cell
from hetero_dispatch.models import CellState, ExperimentRecipe, SweepState
from hetero_dispatch.settings import DEFAULT_SETTINGS, SolverSettings

logger = logging.getLogger(__name__)


def router_node(state: SweepState) -> dict:
    """Entry point: expands the recipe into its ordered cells."""
    cells = build_cells(state["recipe"])
    logger.info("Recipe %s expands to %d cells", state["recipe"].name.value, len(cells))
    return {"cells": cells, "rows": [], "diagnostics": []}


def dispatch_cells(state: SweepState) -> Sequence[Send] | Literal["collector"]:
    """
    Routing function that fans the cells out to parallel evaluators.

    Returns:
        - One Send per cell
        - "collector" when the recipe has no cells
    """
    cells = state.get("cells", [])
    if not cells:
        return "collector"
    settings = state.get("settings", DEFAULT_SETTINGS.model_dump())
    return [
        Send("evaluate_cell", {"cell": cell, "seed": state.get("seed", 0), "settings": settings})
        for cell in cells
    ]


def evaluate_cell_node(state: CellState) -> dict:
    """Worker: evaluates one cell and returns its rows for the reducers."""
    settings = SolverSettings.model_validate(state.get("settings", {}))
    rows, diagnostics = evaluate_cell(state["cell"], state.get("seed", 0), settings)
    return {"rows": rows, "diagnostics": diagnostics}


def collector_node(state: SweepState) -> dict:
    """
    Single writer: CSV or JSON rows, the run manifest and an optional SVG plot.

    Files already written are removed if a later write fails.
    """
    if not state.get("write_outputs", True):
        return {"written_files": []}

    recipe: ExperimentRecipe = state["recipe"]
    fmt = state.get("format", "csv")
    settings = SolverSettings.model_validate(state.get("settings", {}))
    directory = recipe.output_dir
    rows = state.get("rows", [])
    written = []
    try:
        written.append(write_rows(rows, directory / f"{recipe.name.value}.{fmt}", fmt))
        written.append(write_manifest(build_manifest(recipe, state.get("seed", 0), settings, fmt), directory))
        plot = plot_rows(rows, recipe.name, directory / f"{recipe.name.value}.svg")
        if plot is not None:
            written.append(plot)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    logger.info("Wrote %s", ", ".join(str(p) for p in written))
    return {"written_files": [str(p) for p in written]}


def create_sweep_graph() -> StateGraph:
    """
    Create the parallel sweep graph.

    Graph structure:
        START -> router --(conditional)--> evaluate_cell (x N via Send)
                    |                            |
                    v (no cells)                 v
                collector <----------------------+
                    |
                    v
                   END
    """
    graph = StateGraph(SweepState)

    graph.add_node("router", router_node)
    graph.add_node("evaluate_cell", evaluate_cell_node)
    graph.add_node("collector", collector_node)

    graph.add_edge(START, "router")
    graph.add_conditional_edges("router", dispatch_cells, ["evaluate_cell", "collector"])
    graph.add_edge("evaluate_cell", "collector")
    graph.add_edge("collector", END)

    return graph


def compile_sweep_graph():
    """Compile the sweep graph for execution."""
    return create_sweep_graph().compile()


def run_recipe(
    recipe: ExperimentRecipe,
    seed: int = 0,
    settings: SolverSettings = DEFAULT_SETTINGS,
    fmt: str = "csv",
    write_outputs: bool = True,
) -> SweepState:
    """
    Run a recipe through the sweep graph.

    Returns:
        Final state with ``rows`` in cell order, ``diagnostics`` and ``written_files``
    """
    initial: SweepState = {
        "recipe": recipe,
        "seed": seed,
        "settings": settings.model_dump(),
        "format": fmt,
        "write_outputs": write_outputs,
    }
    app = compile_sweep_graph()
    return app.invoke(initial)
