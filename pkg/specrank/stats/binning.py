"""
Mean rank by description length

Within each condition, lengths outside the trim percentiles are dropped
(outliers), the rest are bucketed into fixed-width character bins, and each
bin with enough members gets its mean rank and a bootstrap interval.
"""

import zlib
from typing import Dict, Iterable, List, NamedTuple, Tuple

import numpy as np
import pandas as pd

from specrank.errors import EmptyInput, ValidationError
from specrank.ranking.records import RankResult
from specrank.stats.bootstrap import DEFAULT_LEVEL, DEFAULT_RESAMPLES, bootstrap_ci

DEFAULT_BIN_WIDTH = 10
DEFAULT_MIN_BIN_COUNT = 10
DEFAULT_TRIM = (2.5, 97.5)


class LengthBin(NamedTuple):
    bin_center: float
    mean_rank: float
    ci_low: float
    ci_high: float
    n: int


def _bin_seed(seed: int, condition: str, bin_index: int) -> int:
    sequence = np.random.SeedSequence([seed, zlib.crc32(condition.encode('utf-8')), bin_index])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def length_binned_means(
    results: Iterable[RankResult],
    bin_width_chars: int = DEFAULT_BIN_WIDTH,
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT,
    trim: Tuple[float, float] = DEFAULT_TRIM,
    n_resamples: int = DEFAULT_RESAMPLES,
    level: float = DEFAULT_LEVEL,
    seed: int = 0,
) -> Dict[str, List[LengthBin]]:
    """
    Per-condition mean rank in fixed-width length bins

    Args:
        results: Rank results (char_length and target_rank are used)
        bin_width_chars: Bin width in characters; bin b covers [b*w, (b+1)*w)
        min_bin_count: Bins with fewer members are omitted
        trim: (low, high) length percentiles kept per condition, inclusive
        n_resamples / level / seed: Bootstrap settings for the per-bin interval

    Returns:
        condition -> bins in ascending length order

    Raises:
        EmptyInput: nothing left after trimming and the count threshold
    """
    if bin_width_chars < 1:
        raise ValidationError("bin_width_chars must be >= 1")
    if min_bin_count < 1:
        raise ValidationError("min_bin_count must be >= 1")
    low_pct, high_pct = trim
    if not 0.0 <= low_pct <= high_pct <= 100.0:
        raise ValidationError(f"Invalid trim percentiles {trim}")

    by_condition: Dict[str, List[Tuple[int, float]]] = {}
    for r in results:
        by_condition.setdefault(r.condition, []).append((r.char_length, r.target_rank))

    output: Dict[str, List[LengthBin]] = {}
    for condition in sorted(by_condition):
        lengths = np.array([length for length, _ in by_condition[condition]], dtype=np.float64)
        ranks = np.array([rank for _, rank in by_condition[condition]], dtype=np.float64)
        low, high = np.percentile(lengths, [low_pct, high_pct])
        keep = (lengths >= low) & (lengths <= high)
        lengths, ranks = lengths[keep], ranks[keep]

        bins = []
        bin_index = np.floor_divide(lengths, bin_width_chars).astype(np.int64)
        for b in np.unique(bin_index):
            # Sorted so the interval does not depend on record order within the bin
            members = np.sort(ranks[bin_index == b])
            if members.size < min_bin_count:
                continue
            mean = float(members.mean())
            if members.size >= 2:
                ci = bootstrap_ci(members, np.mean, n_resamples, level, _bin_seed(seed, condition, int(b)))
                ci_low, ci_high = ci.lower, ci.upper
            else:
                ci_low = ci_high = mean
            bins.append(LengthBin((b + 0.5) * bin_width_chars, mean, ci_low, ci_high, int(members.size)))
        if bins:
            output[condition] = bins

    if not output:
        raise EmptyInput("No length bins left after trimming and the minimum-count filter")
    return output


def binned_frame(binned: Dict[str, List[LengthBin]]) -> pd.DataFrame:
    rows = [
        {'condition': condition, **bin_._asdict()}
        for condition, bins in binned.items()
        for bin_ in bins
    ]
    return pd.DataFrame(rows, columns=['condition', 'bin_center', 'mean_rank', 'ci_low', 'ci_high', 'n'])
