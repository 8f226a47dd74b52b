"""Exact CTMC ground truth for small finite farms."""

from .ctmc import CtmcSpec, build_ctmc, dispatch_probabilities, exact_metrics, stationary_distribution

__all__ = [
    "CtmcSpec",
    "build_ctmc",
    "dispatch_probabilities",
    "exact_metrics",
    "stationary_distribution",
]
