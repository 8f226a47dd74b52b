"""Seeded discrete-event simulation of finite two-speed farms."""

from . import engine
from .engine import FarmSimulator, run
from .policies import FarmView, Snapshot, dispatch, query
from .rng import BufferedStream, ServiceSampler, spawn_streams
from .stats import batch_means_ci, histogram_rows, merge_reports

__all__ = [
    "engine",
    # Engine
    "FarmSimulator",
    "run",
    # Policies
    "FarmView",
    "Snapshot",
    "dispatch",
    "query",
    # Random streams
    "BufferedStream",
    "ServiceSampler",
    "spawn_streams",
    # Statistics
    "batch_means_ci",
    "histogram_rows",
    "merge_reports",
]
