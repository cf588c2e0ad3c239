"""Monte-Carlo estimate of the expected worst-case relative improvement.

Each sample draws a latent point from N(0, I), steps a distance alpha along the
metric's maximal eigenvector (turned towards the origin), and compares the
straight line between the two points with the shortened curve. Every sample
seeds its own generator from (seed, index), so the records do not depend on
worker count or completion order.
"""
import logging
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .coordinator import run_jobs
from .errors import InvalidInputError, MonteCarloError
from .geodesic import shorten
from .metrics.base import MetricProvider
from .models import ImprovementRecord, McConfig, McSummary, SampleFailure

logger = logging.getLogger(__name__)

# second seed word for the bootstrap stream, kept apart from sample indices
BOOTSTRAP_STREAM = 2**31 - 1


def sample_pair(p: MetricProvider, alpha: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if alpha <= 0:
        raise InvalidInputError(f"step size alpha must be positive, got {alpha}")
    x_a = rng.standard_normal(p.latent_dim)
    v = p.eigen_at(x_a).max_vector
    v = v / np.linalg.norm(v)
    if v @ (-x_a) < 0:
        v = -v
    return x_a, x_a + alpha * v


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def improvement_record(index: int, p: MetricProvider, cfg: McConfig) -> ImprovementRecord:
    x_a, x_b = sample_pair(p, cfg.alpha, sample_rng(cfg.seed, index))
    result = shorten(x_a, x_b, p, cfg.shorten)
    return ImprovementRecord(
        index=index,
        x_a=x_a.tolist(),
        x_b=x_b.tolist(),
        d_straight=result.d_straight,
        d_short=result.d_short,
        rel_improvement=result.rel_improvement,
        fallback_used=result.fallback_used,
    )


def histogram(values: Sequence[float], bins: int) -> Tuple[List[float], List[int]]:
    """Uniform bins on [0, max]; an all-zero sample uses [0, 1]"""
    values = np.asarray(values, dtype=float)
    top = float(values.max()) if values.size and values.max() > 0 else 1.0
    counts, edges = np.histogram(values, bins=bins, range=(0.0, top))
    return edges.tolist(), counts.astype(int).tolist()


def bootstrap_ci(
    values: Sequence[float],
    resamples: int,
    seed: int,
    level: float = 0.95,
) -> Tuple[Optional[float], Optional[float]]:
    """Percentile bootstrap interval of the mean"""
    values = np.asarray(values, dtype=float)
    if resamples == 0 or values.size < 2:
        return None, None
    rng = np.random.default_rng([seed, BOOTSTRAP_STREAM])
    means = values[rng.integers(0, values.size, size=(resamples, values.size))].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return float(low), float(high)


def summarize(records: List[ImprovementRecord], failures: List[SampleFailure], cfg: McConfig) -> McSummary:
    improvements = np.array([r.rel_improvement for r in records])
    edges, counts = histogram(improvements, cfg.histogram_bins)
    ci_low, ci_high = bootstrap_ci(improvements, cfg.bootstrap_resamples, cfg.seed)
    return McSummary(
        n_samples=cfg.n_samples,
        n_recorded=len(records),
        n_failures=len(failures),
        n_fallbacks=sum(1 for r in records if r.fallback_used),
        mean=float(np.mean(improvements)),
        std=float(np.std(improvements, ddof=1)) if len(records) > 1 else 0.0,
        ci_low=ci_low,
        ci_high=ci_high,
        bin_edges=edges,
        counts=counts,
        records=records,
        failures=failures,
    )


def run_monte_carlo(p: MetricProvider, cfg: McConfig) -> McSummary:
    """Run every sample through the job coordinator and summarize"""
    jobs = [partial(improvement_record, i, p, cfg) for i in range(cfg.n_samples)]
    outcomes = run_jobs(jobs, cfg.workers)

    records = [o.value for o in outcomes if o.ok]
    failures = [SampleFailure(index=o.index, error_message=o.error_message or "") for o in outcomes if not o.ok]
    if len(failures) > cfg.max_failure_fraction * cfg.n_samples or not records:
        raise MonteCarloError(
            f"{len(failures)} of {cfg.n_samples} samples failed "
            f"(limit {cfg.max_failure_fraction:.0%}); first error: {failures[0].error_message}"
        )
    if failures:
        logger.warning("skipped %d failed samples", len(failures))

    summary = summarize(records, failures, cfg)
    logger.info("mean relative improvement %.4f (std %.4f) over %d samples",
                summary.mean, summary.std, summary.n_recorded)
    return summary
