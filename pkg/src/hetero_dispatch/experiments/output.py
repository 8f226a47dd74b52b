"""CSV, JSON, manifest and plot writers for sweep results."""

import csv
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import scipy

import hetero_dispatch
from hetero_dispatch.errors import ConfigError
from hetero_dispatch.models import ExperimentRecipe, RecipeName
from hetero_dispatch.settings import SolverSettings

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

# (x column, y column, series column) per recipe; a row with y but no x is a reference level
PLOT_AXES: dict[RecipeName, tuple[str, str, str]] = {
    RecipeName.CONVERGENCE: ("k", "mean_T", "policy"),
    RecipeName.RESPONSE_GRID: ("lambda", "mean_T", "policy"),
    RecipeName.QUEUE_DISTS: ("i", "frac_at_least_i", "policy"),
    RecipeName.POWER_OF_TWO: ("lambda", "mean_T", "policy"),
    RecipeName.VARY_D: ("d", "mean_T", "policy"),
    RecipeName.PF_PS_SURFACE: ("p_fast", "mean_T", "p_slow"),
    RecipeName.HEURISTIC_TABLE: ("lambda", "pct_error", "family"),
}

# Columns that tell the panels of a multi-panel sweep apart
PANEL_KEYS = ("q_fast", "speed_ratio")


def columns(rows: list[dict[str, Any]]) -> list[str]:
    """Union of row keys in first-seen order."""
    seen: dict[str, None] = {}
    for row in rows:
        for key in row:
            seen.setdefault(key, None)
    return list(seen)


def write_rows(rows: list[dict[str, Any]], path: Path, fmt: str = "csv") -> Path:
    """
    Write rows as CSV (one row per sweep point, blank for missing values) or a JSON list.

    Raises:
        ConfigError: For an unknown format
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(json.dumps(rows, indent=2, default=str) + "\n", encoding="utf-8")
    elif fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=columns(rows), restval="", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: "" if value is None else value for key, value in row.items()})
    else:
        raise ConfigError(f"Unknown output format '{fmt}' (expected csv or json)")
    return path


def build_manifest(
    recipe: ExperimentRecipe, seed: int, settings: SolverSettings, fmt: str
) -> dict[str, Any]:
    """Everything needed to replay a sweep: versions, seed, tolerances, recipe and overrides."""
    return {
        "versions": {
            "hetero_dispatch": hetero_dispatch.__version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": seed,
        "settings": settings.model_dump(),
        "recipe": recipe.name.value,
        "overrides": dict(recipe.overrides),
        "format": fmt,
    }


def write_manifest(manifest: dict[str, Any], directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> tuple[ExperimentRecipe, int, SolverSettings, str]:
    """
    Read a run manifest back into (recipe, seed, settings, format).

    The recipe's output directory is the manifest's own directory.

    Raises:
        ConfigError: If the file is missing or malformed
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        recipe = ExperimentRecipe(name=data["recipe"], overrides=data.get("overrides", {}), output_dir=path.parent)
        settings = SolverSettings.model_validate(data.get("settings", {}))
        return recipe, int(data["seed"]), settings, data.get("format", "csv")
    except FileNotFoundError:
        raise ConfigError(f"Manifest not found: {path}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Malformed manifest {path}: {exc}") from exc


def _series_label(row: dict[str, Any], series_key: str, with_panel: bool) -> str:
    label = str(row.get(series_key))
    if row.get("source"):
        label += f" ({row['source']})"
    if with_panel:
        label += f" qF={row.get('q_fast')} r={row.get('speed_ratio')}"
    return label


def plot_series(
    rows: list[dict[str, Any]], recipe: RecipeName
) -> tuple[dict[str, list[tuple[float, float]]], dict[str, float]]:
    """
    Group sweep rows into plotted lines and horizontal reference levels.

    Rows with a y value but no x value (the analytic mean of a convergence
    sweep has no k) become reference levels. Labels carry the (q_fast,
    speed_ratio) panel when the rows span more than one panel.

    Returns:
        (points sorted by x per label, reference y per label)
    """
    x_key, y_key, series_key = PLOT_AXES[recipe]
    plotted = [row for row in rows if row.get(y_key) is not None]
    with_panel = len({tuple(row.get(key) for key in PANEL_KEYS) for row in plotted}) > 1

    series: dict[str, list[tuple[float, float]]] = {}
    references: dict[str, float] = {}
    for row in plotted:
        label = _series_label(row, series_key, with_panel)
        x = row.get(x_key)
        if x is None:
            references[label] = float(row[y_key])
        else:
            series.setdefault(label, []).append((float(x), float(row[y_key])))
    for points in series.values():
        points.sort()
    return series, references


def plot_rows(rows: list[dict[str, Any]], recipe: RecipeName, path: Path) -> Path | None:
    """
    Static SVG line plot of a sweep, one line per series and a dashed line per reference level.

    Returns None (with a warning) when matplotlib is not installed.
    """
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib is not installed; skipping %s (pip install 'hetero-dispatch[plot]')", path.name)
        return None

    x_key, y_key, _ = PLOT_AXES[recipe]
    series, references = plot_series(rows, recipe)

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in series.items():
        ax.plot([p[0] for p in points], [p[1] for p in points], marker=".", label=label)
    for label, level in references.items():
        ax.axhline(level, linestyle="--", linewidth=1.0, label=label)
    ax.set_xlabel(x_key)
    ax.set_ylabel(y_key)
    if recipe is RecipeName.QUEUE_DISTS:
        ax.set_yscale("log")
    ax.set_title(recipe.value)
    if series or references:
        ax.legend(fontsize="small")
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
