from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from specrank.errors import EmptyInput, ValidationError
from specrank.ranking.records import RankResult


def rank_cdf(ranks: Sequence[float]) -> List[Tuple[float, float]]:
    """
    Empirical CDF of target ranks

    Returns:
        (rank_value, cumulative_proportion) at each distinct rank, ascending;
        the last proportion is exactly 1.0

    Raises:
        EmptyInput: no ranks
    """
    values = np.asarray(list(ranks), dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("rank_cdf needs at least one rank")
    support, counts = np.unique(values, return_counts=True)
    cumulative = np.cumsum(counts)
    return [(float(r), float(c) / values.size) for r, c in zip(support, cumulative)]


def recall_at_k(ranks: Sequence[float], k: float) -> float:
    """Share of descriptions whose target lands within the top k"""
    values = np.asarray(list(ranks), dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("recall_at_k needs at least one rank")
    if k < 1:
        raise ValidationError("k must be >= 1")
    return float(np.count_nonzero(values <= k)) / values.size


def results_frame(results: Iterable[RankResult]) -> pd.DataFrame:
    rows = [
        {
            'desc_id': r.desc_id,
            'condition': r.condition,
            'target_rank': r.target_rank,
            'target_score': r.target_score,
            'n_contrast': r.n_contrast,
            'char_length': r.char_length,
        }
        for r in results
    ]
    columns = ['desc_id', 'condition', 'target_rank', 'target_score', 'n_contrast', 'char_length']
    return pd.DataFrame(rows, columns=columns)


def condition_cdfs(results: Iterable[RankResult]) -> Dict[str, List[Tuple[float, float]]]:
    by_condition: Dict[str, List[float]] = {}
    for r in results:
        by_condition.setdefault(r.condition, []).append(r.target_rank)
    return {condition: rank_cdf(by_condition[condition]) for condition in sorted(by_condition)}


def summarize_ranks(results: Iterable[RankResult], recall_ks: Sequence[int] = (1, 5, 10)) -> pd.DataFrame:
    """Per-condition count, mean/median rank, mean length and recall@k"""
    frame = results_frame(results)
    if frame.empty:
        raise EmptyInput("No rank results to summarize")
    rows = []
    for condition, group in frame.groupby('condition', sort=True):
        row = {
            'condition': condition,
            'n': int(len(group)),
            'mean_rank': float(group['target_rank'].mean()),
            'median_rank': float(group['target_rank'].median()),
            'mean_length': float(group['char_length'].mean()),
        }
        for k in recall_ks:
            row[f'recall_at_{k}'] = recall_at_k(group['target_rank'], k)
        rows.append(row)
    return pd.DataFrame(rows)
