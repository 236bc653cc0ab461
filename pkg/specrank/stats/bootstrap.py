"""
Percentile bootstrap confidence intervals

Resample r draws its indices from its own PCG64 stream spawned from
SeedSequence(seed), so an interval depends only on (data, statistic,
n_resamples, level, seed) and not on how resamples are spread over workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from specrank.errors import EmptyInput, ValidationError

DEFAULT_RESAMPLES = 2000
DEFAULT_LEVEL = 0.95


@dataclass(frozen=True)
class BootstrapCI:
    statistic_name: str
    point: float
    lower: float
    upper: float
    level: float = DEFAULT_LEVEL
    n_resamples: int = DEFAULT_RESAMPLES
    seed: int = 0

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _as_samples(samples):
    if isinstance(samples, np.ndarray):
        return samples, True
    items = list(samples)
    if items and all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in items):
        return np.asarray(items, dtype=np.float64), True
    return items, False


def bootstrap_ci(
    samples,
    statistic: Callable = np.mean,
    n_resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
    statistic_name: Optional[str] = None,
    workers: int = 1,
) -> BootstrapCI:
    """
    Percentile bootstrap interval for statistic(samples)

    Args:
        samples: Numeric vector, or any sequence of records (e.g. preference
            trials); statistic receives a resample of the same kind
        statistic: Reduction function of one (re)sample
        n_resamples: Number of with-replacement resamples
        level: Confidence level in (0, 1)
        seed: Unsigned seed; equal seeds give identical intervals
        workers: Threads evaluating resamples

    Raises:
        EmptyInput: no samples
    """
    data, numeric = _as_samples(samples)
    n = len(data)
    if n == 0:
        raise EmptyInput("bootstrap_ci needs samples")
    if n < 2:
        raise ValidationError("bootstrap_ci needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must be in (0, 1), got {level}")
    if n_resamples < 1:
        raise ValidationError("n_resamples must be >= 1")
    if seed < 0:
        raise ValidationError("seed must be unsigned")

    streams = np.random.SeedSequence(seed).spawn(n_resamples)

    def one(stream) -> float:
        indices = np.random.Generator(np.random.PCG64(stream)).integers(0, n, size=n)
        resample = data[indices] if numeric else [data[i] for i in indices]
        return float(statistic(resample))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.fromiter(pool.map(one, streams), dtype=np.float64, count=n_resamples)
    else:
        values = np.fromiter((one(s) for s in streams), dtype=np.float64, count=n_resamples)

    alpha = 1.0 - level
    lower, upper = np.percentile(values, [100.0 * alpha / 2.0, 100.0 * (1.0 - alpha / 2.0)])
    return BootstrapCI(
        statistic_name=statistic_name or getattr(statistic, '__name__', 'statistic'),
        point=float(statistic(data)),
        lower=float(lower),
        upper=float(upper),
        level=level,
        n_resamples=n_resamples,
        seed=seed,
    )
