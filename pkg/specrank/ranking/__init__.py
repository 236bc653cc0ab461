"""
Rank engine

Scores descriptions against a contrast set and turns target ranks into the
specificity measure (lower rank = more specific).
"""

from .records import (
    ExcludedRecord, RankResult, read_excluded_records, read_rank_records, write_excluded_records,
    write_rank_records
)
from .engine import ScoreMatrix, rank_all, score_matrix, stream_score_blocks, target_rank
from .summary import condition_cdfs, rank_cdf, recall_at_k, results_frame, summarize_ranks

__all__ = [
    'ExcludedRecord',
    'RankResult',
    'read_excluded_records',
    'read_rank_records',
    'write_excluded_records',
    'write_rank_records',
    'ScoreMatrix',
    'rank_all',
    'score_matrix',
    'stream_score_blocks',
    'target_rank',
    'condition_cdfs',
    'rank_cdf',
    'recall_at_k',
    'results_frame',
    'summarize_ranks',
]
