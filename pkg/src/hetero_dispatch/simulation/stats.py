"""Batch-means confidence intervals and replication merging."""

import math

import numpy as np
from scipy import stats

from hetero_dispatch.errors import ConfigError
from hetero_dispatch.models import QueueLengthBin, SimReport

# Busy fractions and queue-length fractions differ from their true values by
# float rounding only; these are clipped into [0, 1].
_UNIT_SLACK = 1e-9


def batch_means_ci(batch_means: list[float], confidence: float = 0.99) -> tuple[float, float]:
    """
    Grand mean and Student-t confidence half-width of a list of batch means.

    Returns:
        (mean, half-width); the half-width is 0 for fewer than two batches
    """
    values = np.asarray(batch_means, dtype=float)
    if values.size == 0:
        return math.nan, 0.0
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    quantile = stats.t.ppf(0.5 + confidence / 2.0, values.size - 1)
    return mean, float(quantile * values.std(ddof=1) / math.sqrt(values.size))


def unit_clip(value: float) -> float:
    """Clip a fraction that may carry float rounding into [0, 1]."""
    if -_UNIT_SLACK < value < 0.0:
        return 0.0
    if 1.0 < value < 1.0 + _UNIT_SLACK:
        return 1.0
    return value


def histogram_bins(exact: list[float]) -> list[QueueLengthBin]:
    """Bins with P(exactly i) and P(at least i) from per-level time fractions."""
    while len(exact) > 1 and exact[-1] == 0.0:
        exact = exact[:-1]
    bins = []
    at_least = 1.0
    for i, fraction in enumerate(exact):
        bins.append(QueueLengthBin(i=i, frac_at_least=unit_clip(min(at_least, 1.0)), frac_exactly=unit_clip(fraction)))
        at_least = max(0.0, at_least - fraction)
    return bins


def histogram_rows(report: SimReport) -> list[dict[str, object]]:
    """CSV rows (class, i, frac_at_least_i, frac_exactly_i) for both classes."""
    rows = []
    for label, bins in (("fast", report.hist_fast), ("slow", report.hist_slow)):
        for b in bins:
            rows.append({
                "class": label,
                "i": b.i,
                "frac_at_least_i": b.frac_at_least,
                "frac_exactly_i": b.frac_exactly,
            })
    return rows


def _pool_histograms(histograms: list[list[QueueLengthBin]], weights: list[float]) -> list[QueueLengthBin]:
    length = max((len(h) for h in histograms), default=0)
    exact = [0.0] * length
    total = sum(weights)
    for hist, weight in zip(histograms, weights):
        for b in hist:
            exact[b.i] += weight * b.frac_exactly / total
    return histogram_bins(exact)


def merge_reports(reports: list[SimReport], confidence: float = 0.99) -> SimReport:
    """
    Pool independent replications of the same experiment.

    Batch means are concatenated and time averages are weighted by each
    replication's observation window. Inputs are sorted by seed first, so
    the result does not depend on their order.

    Raises:
        ConfigError: If the list is empty or mixes policies
    """
    if not reports:
        raise ConfigError("Nothing to merge")
    if len({r.policy for r in reports}) > 1:
        raise ConfigError("Cannot merge reports of different policies")
    ordered = sorted(reports, key=lambda r: r.seed)
    batch_means = [m for r in ordered for m in r.batch_means]
    mean_t, halfwidth = batch_means_ci(batch_means, confidence)
    weights = [r.observed_time for r in ordered]
    total_time = sum(weights)

    def weighted(field: str) -> float:
        return unit_clip(sum(getattr(r, field) * w for r, w in zip(ordered, weights)) / total_time)

    return SimReport(
        policy=ordered[0].policy,
        mean_T=mean_t,
        ci_halfwidth_99=halfwidth,
        busy_fast=weighted("busy_fast"),
        busy_slow=weighted("busy_slow"),
        busy_fast_halfwidth_99=max(r.busy_fast_halfwidth_99 for r in ordered) / math.sqrt(len(ordered)),
        busy_slow_halfwidth_99=max(r.busy_slow_halfwidth_99 for r in ordered) / math.sqrt(len(ordered)),
        hist_fast=_pool_histograms([r.hist_fast for r in ordered], weights),
        hist_slow=_pool_histograms([r.hist_slow for r in ordered], weights),
        batch_means=batch_means,
        completed_fast=sum(r.completed_fast for r in ordered),
        completed_slow=sum(r.completed_slow for r in ordered),
        observed_time=total_time,
        mean_number_by_third=[],
        arrivals_processed=sum(r.arrivals_processed for r in ordered),
        warmup_discarded=sum(r.warmup_discarded for r in ordered),
        seed=ordered[0].seed,
        unstable_flag=any(r.unstable_flag for r in ordered),
    )
