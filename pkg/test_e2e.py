"""End-to-end run of the sweep graph with step-by-step streaming."""

from hetero_dispatch.experiments import compile_sweep_graph, create_sweep_graph
from hetero_dispatch.models import ExperimentRecipe, RecipeName, SweepState
from hetero_dispatch.settings import SolverSettings


def run_with_streaming() -> SweepState:
    """Stream a small heuristic table, printing each node's updates as it finishes."""
    initial_state: SweepState = {
        "recipe": ExperimentRecipe(
            name=RecipeName.HEURISTIC_TABLE,
            overrides={"lambdas": "0.14,0.54,0.90"},
        ),
        "seed": 0,
        "settings": SolverSettings(grid_step=1 / 32).model_dump(),
        "format": "csv",
        "write_outputs": False,
    }

    app = compile_sweep_graph()

    print("=" * 60)
    print("HEURISTIC TABLE SWEEP")
    print("=" * 60)

    print("\n[1] STREAMING EXECUTION - one update per finished node:\n")
    step_count = 0
    for event in app.stream(initial_state, stream_mode="updates"):
        step_count += 1
        for node_name, updates in event.items():
            print(f"Step {step_count}: {node_name}")
            if not updates:
                continue
            if "cells" in updates:
                print(f"  Cells: {len(updates['cells'])}")
            for row in updates.get("rows", []):
                print(
                    f"  {row['family']} lambda={row['lambda']:.2f} "
                    f"opt={row.get('et_opt', float('nan')):.4f} heur={row.get('et_heur', float('nan')):.4f}"
                )
            for diag in updates.get("diagnostics", []):
                print(f"  [{diag.code}] {diag.message}")

    print("\n[2] FINAL STATE:\n")
    final_state = app.invoke(initial_state)
    print(f"{'family':<6} {'lambda':>6} {'pF*':>7} {'pS*':>7} {'E[T]*':>8} {'E[T]h':>8} {'gap %':>7}")
    for row in final_state["rows"]:
        if row["status"] != "ok":
            print(f"{row['family']:<6} {row['lambda']:>6.2f}  infeasible")
            continue
        print(
            f"{row['family']:<6} {row['lambda']:>6.2f} {row['p_fast_opt']:>7.3f} {row['p_slow_opt']:>7.3f} "
            f"{row['et_opt']:>8.4f} {row['et_heur']:>8.4f} {row['pct_error']:>7.3f}"
        )
    return final_state


def show_graph_visualization() -> None:
    """Print the graph's nodes and, when available, its Mermaid diagram."""
    graph = create_sweep_graph()
    print("\n[3] GRAPH STRUCTURE:\n")
    print("Nodes:")
    for node in graph.nodes:
        print(f"  - {node}")

    print("\nFlow:")
    print("  START -> router")
    print("  router --(Send x N)--> evaluate_cell (concurrent)")
    print("  router --(no cells)--> collector")
    print("  evaluate_cell -> collector")
    print("  collector -> END")

    try:
        print("\nMermaid diagram:")
        print(graph.compile().get_graph().draw_mermaid())
    except Exception as e:
        print(f"\n(Mermaid generation not available: {e})")


if __name__ == "__main__":
    run_with_streaming()
    show_graph_visualization()
