"""Experiment recipes executed by a parallel LangGraph sweep."""

from .output import load_manifest, write_rows
from .recipes import RECIPES, build_cells, evaluate_cell
from .sweep_graph import (
    create_sweep_graph,
    compile_sweep_graph,
    run_recipe,
    # Node functions (for direct testing)
    router_node,
    dispatch_cells,
    evaluate_cell_node,
    collector_node,
)

__all__ = [
    # Main API
    "run_recipe",
    "create_sweep_graph",
    "compile_sweep_graph",
    # Node functions
    "router_node",
    "dispatch_cells",
    "evaluate_cell_node",
    "collector_node",
    # Recipes
    "RECIPES",
    "build_cells",
    "evaluate_cell",
    # Output
    "load_manifest",
    "write_rows",
]
