"""Post-run metric computation: block/transaction timing, percentiles,
stale counts, disturbance resolving periods, and bundled statistical checks.

Everything here is pure post-processing over an immutable SimTrace.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

PERCENTILES = (50, 70, 90, 95, 99)

# Asymptotic Kolmogorov-Smirnov critical coefficients c(alpha):
# one-sample threshold c/sqrt(n), two-sample c*sqrt((n+m)/(n*m)).
KS_COEFFICIENTS = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}


@dataclass(frozen=True)
class MetricSeries:
    name: str
    points: tuple  # ordered (t, value) pairs, t non-decreasing


@dataclass(frozen=True)
class PercentileReport:
    percentiles: dict  # rank -> value

    def __getitem__(self, rank: int):
        return self.percentiles[rank]


@dataclass(frozen=True)
class ResolvingPeriod:
    start_s: float
    end_s: float
    duration_s: float
    resolved: bool


def percentile_report(samples, ranks=PERCENTILES) -> PercentileReport:
    """Nearest-rank percentiles: value at index ceil(p/100 * n) of the sorted sample."""
    data = sorted(samples)
    if not data:
        raise ValueError("empty sample")
    n = len(data)
    out = {}
    for rank in ranks:
        idx = max(1, math.ceil(rank / 100.0 * n))
        out[rank] = data[idx - 1]
    return PercentileReport(out)


def block_times(trace, canonical_only: bool = True) -> list[float]:
    """Adjacent timestamp gaps, over the canonical chain or over all blocks.

    The all-blocks variant sorts every observed timestamp ascending first, the
    way an external monitor of the running network would.
    """
    if canonical_only:
        stamps = [rec.timestamp for rec in trace.blocks if not rec.stale]
        stamps.sort()  # canonical numbers increase with timestamp, but be explicit
    else:
        stamps = sorted(rec.timestamp for rec in trace.blocks)
    if len(stamps) < 2:
        raise ValueError("need at least two blocks")
    return [b - a for a, b in zip(stamps, stamps[1:])]


def tx_processing_times(trace) -> tuple[list[float], list[str]]:
    """Per included transaction, inclusion-block timestamp minus creation time.

    Returns (times, unincluded transaction ids).
    """
    times = []
    unincluded = []
    for rec in trace.txs:
        if rec.included_at is None:
            unincluded.append(rec.id)
        else:
            times.append(rec.included_at - rec.created_at)
    return times, unincluded


def stale_rate(trace) -> float:
    total = len(trace.blocks)
    if total == 0:
        raise ValueError("empty trace")
    stale = sum(1 for rec in trace.blocks if rec.stale)
    return stale / total


def mean_difficulty(trace, canonical_only: bool = True) -> float:
    diffs = [rec.difficulty for rec in trace.blocks if canonical_only is False or not rec.stale]
    if not diffs:
        raise ValueError("empty trace")
    return sum(diffs) / len(diffs)


def observer_block_time_series(trace, window: int) -> MetricSeries:
    """Smoothed block-time series as seen by the run's observer node.

    Values are moving averages over the last ``window`` positive timestamp
    gaps between consecutively *arriving* blocks (arrival order, so reorg
    artifacts show up as skipped non-positive gaps); each point sits at the
    arrival time of the block completing its window.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    gaps = []
    points = []
    prev_ts = None
    for arrival_t, _bid, ts in trace.observer_arrivals:
        if prev_ts is not None:
            gap = ts - prev_ts
            if gap > 0:
                gaps.append(gap)
                if len(gaps) >= window:
                    points.append((arrival_t, sum(gaps[-window:]) / window))
        prev_ts = ts
    return MetricSeries(name=f"observer_block_time_ma{window}", points=tuple(points))


def resolving_period(
    series: MetricSeries,
    t0: float,
    rel_threshold: float = 0.05,
    consecutive: int = 3,
) -> ResolvingPeriod:
    """Find when a disturbed series settles: the first point from which the
    next ``consecutive`` point-to-point relative variations all stay under
    ``rel_threshold``. Start is anchored at the disturbance onset t0.
    """
    pts = [p for p in series.points]
    values = [v for _, v in pts]
    times = [t for t, _ in pts]
    first = None
    for i, t in enumerate(times):
        if t >= t0:
            first = i
            break
    if first is None:
        return ResolvingPeriod(start_s=t0, end_s=math.nan, duration_s=math.nan, resolved=False)
    for j in range(first, len(pts)):
        tail = range(j + 1, j + 1 + consecutive)
        if tail.stop > len(pts):
            break
        ok = True
        for i in tail:
            prev = values[i - 1]
            if prev == 0 or abs(values[i] / prev - 1.0) >= rel_threshold:
                ok = False
                break
        if ok:
            return ResolvingPeriod(start_s=t0, end_s=times[j], duration_s=times[j] - t0, resolved=True)
    return ResolvingPeriod(start_s=t0, end_s=math.nan, duration_s=math.nan, resolved=False)


def ks_statistic_two_sample(a, b) -> float:
    """Max distance between the two empirical CDFs."""
    xs = sorted(a)
    ys = sorted(b)
    if not xs or not ys:
        raise ValueError("empty sample")
    i = j = 0
    d = 0.0
    while i < len(xs) and j < len(ys):
        if xs[i] <= ys[j]:
            i += 1
        else:
            j += 1
        d = max(d, abs(i / len(xs) - j / len(ys)))
    return d


def ks_two_sample_passes(a, b, alpha: float = 0.01) -> bool:
    coeff = KS_COEFFICIENTS[alpha]
    n, m = len(a), len(b)
    return ks_statistic_two_sample(a, b) <= coeff * math.sqrt((n + m) / (n * m))


def ks_statistic_exponential(samples, mean: float) -> float:
    """One-sample KS distance against Exponential(mean)."""
    xs = sorted(samples)
    if not xs or mean <= 0:
        raise ValueError("bad sample or mean")
    n = len(xs)
    d = 0.0
    for i, x in enumerate(xs):
        cdf = 1.0 - math.exp(-x / mean)
        d = max(d, abs((i + 1) / n - cdf), abs(i / n - cdf))
    return d


def ks_exponential_passes(samples, mean: float, alpha: float = 0.01) -> bool:
    return ks_statistic_exponential(samples, mean) <= KS_COEFFICIENTS[alpha] / math.sqrt(len(samples))


def index_of_dispersion(event_times, bucket_s: float, horizon_s: float) -> float:
    """Variance-to-mean ratio of per-bucket event counts (1.0 for Poisson)."""
    buckets = int(horizon_s // bucket_s)
    if buckets < 2:
        raise ValueError("need at least two buckets")
    counts = [0] * buckets
    for t in event_times:
        idx = int(t // bucket_s)
        if idx < buckets:
            counts[idx] += 1
    mean = sum(counts) / buckets
    if mean == 0:
        raise ValueError("no events")
    var = sum((c - mean) ** 2 for c in counts) / (buckets - 1)
    return var / mean


def linear_fit_r2(xs, ys) -> tuple[float, float, float]:
    """Least-squares line fit; returns (slope, intercept, R^2)."""
    n = len(xs)
    if n < 2 or n != len(ys):
        raise ValueError("need matched samples of length >= 2")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0:
        raise ValueError("degenerate x values")
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - my) ** 2 for y in ys)
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def run_metrics(trace, smoothing_window: int = 5, resolve_t0: float | None = None) -> dict:
    """The standard per-run metric set used by the runner and sweep aggregator."""
    metrics = {}
    canonical = [rec for rec in trace.blocks if not rec.stale]
    metrics["blocks_total"] = float(len(trace.blocks))
    metrics["blocks_canonical"] = float(len(canonical))
    if trace.blocks:
        metrics["stale_rate"] = stale_rate(trace)
        metrics["difficulty_mean"] = mean_difficulty(trace)
    if len(canonical) >= 2:
        gaps = block_times(trace, canonical_only=True)
        metrics["block_time_mean_s"] = sum(gaps) / len(gaps)
        report = percentile_report(gaps)
        for rank in PERCENTILES:
            metrics[f"block_time_p{rank}_s"] = report[rank]
    times, unincluded = tx_processing_times(trace)
    metrics["txs_total"] = float(len(trace.txs))
    metrics["txs_unincluded"] = float(len(unincluded))
    if times:
        metrics["tx_time_mean_s"] = sum(times) / len(times)
        report = percentile_report(times)
        for rank in PERCENTILES:
            metrics[f"tx_time_p{rank}_s"] = report[rank]
    if trace.sync_episodes:
        delays = [ep.sync_delay_s for ep in trace.sync_episodes]
        metrics["sync_episodes"] = float(len(delays))
        metrics["sync_delay_mean_s"] = sum(delays) / len(delays)
    if trace.online_samples:
        counts = [c for _, c in trace.online_samples]
        metrics["online_miners_mean"] = sum(counts) / len(counts)
    if trace.reorg_events:
        metrics["reorg_depth_max"] = float(max(d for _, _, d in trace.reorg_events))
    else:
        metrics["reorg_depth_max"] = 0.0
    if resolve_t0 is not None:
        series = observer_block_time_series(trace, smoothing_window)
        period = resolving_period(series, resolve_t0)
        metrics["resolve_duration_s"] = period.duration_s if period.resolved else math.inf
    return metrics


def write_metrics_csv(path, rows) -> None:
    """Long-format rows (param, seed, metric, value)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "seed", "metric", "value"])
        for param, seed, metric, value in rows:
            writer.writerow([param, seed, metric, repr(float(value))])


def write_summary(path, title: str, metrics: dict) -> None:
    lines = [title, "=" * len(title)]
    for name in sorted(metrics):
        lines.append(f"{name:>24} = {metrics[name]:.6g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
