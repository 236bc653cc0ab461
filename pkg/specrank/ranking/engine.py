"""
Score matrix and target ranks

Descriptions are scored against the whole contrast set in row blocks. Blocks
have a fixed size independent of the number of workers and each block is a
single matrix product, so results are identical run to run and for any
worker count. The full M x N matrix is only built when score_matrix is
called explicitly.

Ranks compare the clamped cosines themselves; the weight w only scales the
reported target score.
"""

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from specrank.embeddings.contrast import ContrastSet
from specrank.embeddings.manifest import Dataset
from specrank.embeddings.store import EmbeddingStore
from specrank.embeddings.vectors import NORM_TOLERANCE, normalize_rows
from specrank.errors import DimMismatch, ValidationError
from specrank.ranking.records import RankResult
from specrank.scoring.scorer import ScorerConfig, score_from_cosine

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_ROWS = 256


@dataclass(frozen=True)
class ScoreMatrix:
    """Materialized M x N block of compatibility scores (float32)"""

    values: np.ndarray
    col_ids: Tuple[str, ...] = ()

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


def _check_inputs(text_embs: np.ndarray, contrast: ContrastSet) -> np.ndarray:
    text_embs = np.ascontiguousarray(text_embs, dtype=np.float32)
    if text_embs.ndim != 2:
        raise DimMismatch(f"Text embeddings must be 2-d, got shape {text_embs.shape}")
    if text_embs.shape[1] != contrast.dim:
        raise DimMismatch(f"Text dim {text_embs.shape[1]} does not match contrast dim {contrast.dim}")
    if text_embs.shape[0]:
        norms = np.linalg.norm(text_embs.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise ValidationError("Text embedding rows must be unit-normalized")
    return text_embs


def _cosine_block(block: np.ndarray, matrix: np.ndarray, cfg: ScorerConfig) -> np.ndarray:
    """Clipped cosines, floored at zero when the scorer clamps; the values ranks are taken on"""
    cos = block @ matrix.T
    np.clip(cos, 0.0 if cfg.clamp_at_zero else -1.0, 1.0, out=cos)
    return cos


def _score_block(block: np.ndarray, matrix: np.ndarray, cfg: ScorerConfig) -> np.ndarray:
    return score_from_cosine(_cosine_block(block, matrix, cfg), cfg)


def _stream_blocks(text_embs, matrix, cfg, block_fn, block_rows, workers):
    offsets = range(0, text_embs.shape[0], block_rows)
    if workers <= 1:
        for start in offsets:
            yield start, block_fn(text_embs[start:start + block_rows], matrix, cfg)
        return

    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = deque()
        for start in offsets:
            pending.append((start, pool.submit(block_fn, text_embs[start:start + block_rows], matrix, cfg)))
            if len(pending) >= 2 * workers:
                done_start, future = pending.popleft()
                yield done_start, future.result()
        while pending:
            done_start, future = pending.popleft()
            yield done_start, future.result()


def stream_score_blocks(
    text_embs: np.ndarray,
    contrast: ContrastSet,
    cfg: ScorerConfig,
    block_rows: int = DEFAULT_BLOCK_ROWS,
    workers: int = 1,
) -> Iterator[Tuple[int, np.ndarray]]:
    """
    Yield (row_offset, scores) blocks in row order

    At most 2 * workers blocks are in flight, so memory stays bounded by the
    block size rather than by M * N.
    """
    text_embs = _check_inputs(text_embs, contrast)
    if block_rows < 1:
        raise ValidationError("block_rows must be >= 1")
    return _stream_blocks(text_embs, contrast.matrix, cfg, _score_block, block_rows, workers)


def score_matrix(
    text_embs: np.ndarray,
    contrast: ContrastSet,
    cfg: Optional[ScorerConfig] = None,
    block_rows: int = DEFAULT_BLOCK_ROWS,
    workers: int = 1,
) -> ScoreMatrix:
    """
    Materialize every description x contrast-image score

    Only sensible for small inputs; rank_all streams instead.

    Raises:
        DimMismatch: embedding dims disagree
    """
    cfg = cfg or ScorerConfig()
    text_embs = _check_inputs(text_embs, contrast)
    values = np.empty((text_embs.shape[0], contrast.size), dtype=np.float32)
    for start, block in stream_score_blocks(text_embs, contrast, cfg, block_rows, workers):
        values[start:start + block.shape[0]] = block
    return ScoreMatrix(values=values, col_ids=contrast.image_ids)


def target_rank(scores_row: Sequence[float], target_index: int) -> Tuple[float, int, int]:
    """
    Mid-rank of the target within one score row

    rank = 1 + #{j != t : s_j > s_t} + #{j != t : s_j == s_t} / 2

    Returns:
        (rank, n_strictly_greater, n_tied)

    Raises:
        IndexError: target_index outside the row
    """
    row = np.asarray(scores_row)
    n = row.shape[0]
    if not 0 <= target_index < n:
        raise IndexError(f"target_index {target_index} out of range for row of length {n}")
    target = row[target_index]
    n_greater = int(np.count_nonzero(row > target))
    n_tied = int(np.count_nonzero(row == target)) - 1
    return 1.0 + n_greater + n_tied / 2.0, n_greater, n_tied


def _block_ranks(block: np.ndarray, target_cols: np.ndarray, cfg: ScorerConfig):
    """Mid-ranks over a block of ranking cosines; the target score gets w applied afterwards"""
    rows = np.arange(block.shape[0])
    target_cos = block[rows, target_cols]
    column = target_cos[:, None]
    n_greater = np.count_nonzero(block > column, axis=1)
    n_tied = np.count_nonzero(block == column, axis=1) - 1
    ranks = 1.0 + n_greater + n_tied / 2.0
    return ranks, score_from_cosine(target_cos, cfg), n_greater, n_tied


def _subsample_columns(rng: np.random.Generator, n_total: int, target: int, size: int) -> np.ndarray:
    alternatives = rng.choice(n_total - 1, size=size - 1, replace=False)
    alternatives = alternatives + (alternatives >= target)
    return np.concatenate(([target], alternatives))


def rank_all(
    dataset: Dataset,
    contrast: ContrastSet,
    cfg: Optional[ScorerConfig],
    text_store: EmbeddingStore,
    block_rows: int = DEFAULT_BLOCK_ROWS,
    workers: int = 1,
    subsample: Optional[int] = None,
    seed: int = 0,
    progress: bool = False,
) -> List[RankResult]:
    """
    Rank every non-excluded description's target image against the contrast set

    Args:
        dataset: Dataset; excluded descriptions are skipped (see Dataset.excluded_descriptions)
        contrast: Normalized contrast set containing every target
        cfg: Scorer configuration
        text_store: Raw text embeddings keyed by desc_id
        block_rows: Descriptions per scoring block
        workers: Threads scoring blocks in parallel
        subsample: When set, each description is ranked against its target plus
            subsample - 1 alternatives drawn uniformly (seeded per description)
        seed: Seed for subsampling
        progress: Show a textual progress line

    Returns:
        One RankResult per non-excluded description, ordered by desc_id

    Raises:
        DanglingTarget: a target image is missing from the contrast set
        MissingEmbedding: a non-excluded description has no text embedding
    """
    cfg = cfg or ScorerConfig()
    descriptions = dataset.active_descriptions()
    if not descriptions:
        return []

    target_cols = np.array([contrast.position(d.target_image_id) for d in descriptions], dtype=np.int64)
    text_embs = normalize_rows(text_store.matrix([d.desc_id for d in descriptions]))
    if text_embs.shape[1] != contrast.dim:
        raise DimMismatch(f"Text dim {text_embs.shape[1]} does not match contrast dim {contrast.dim}")

    if subsample is not None and subsample < contrast.size:
        ranks, scores, greater, tied, n_contrast = _rank_subsampled(
            text_embs, target_cols, contrast, cfg, subsample, seed, progress
        )
    else:
        ranks = np.empty(len(descriptions))
        scores = np.empty(len(descriptions), dtype=np.float32)
        greater = np.empty(len(descriptions), dtype=np.int64)
        tied = np.empty(len(descriptions), dtype=np.int64)
        n_contrast = contrast.size
        if block_rows < 1:
            raise ValidationError("block_rows must be >= 1")
        text_embs = _check_inputs(text_embs, contrast)
        blocks = _stream_blocks(text_embs, contrast.matrix, cfg, _cosine_block, block_rows, workers)
        with tqdm(total=len(descriptions), desc='ranking', unit='desc', disable=not progress) as bar:
            for start, block in blocks:
                stop = start + block.shape[0]
                ranks[start:stop], scores[start:stop], greater[start:stop], tied[start:stop] = \
                    _block_ranks(block, target_cols[start:stop], cfg)
                bar.update(block.shape[0])

    logger.info(f"Ranked {len(descriptions)} descriptions against {n_contrast} images")
    return [
        RankResult(
            desc_id=d.desc_id,
            condition=d.condition,
            target_rank=float(ranks[i]),
            target_score=float(scores[i]),
            n_contrast=int(n_contrast),
            n_strictly_greater=int(greater[i]),
            n_tied=int(tied[i]),
            char_length=d.char_length,
        )
        for i, d in enumerate(descriptions)
    ]


def _rank_subsampled(text_embs, target_cols, contrast, cfg, subsample, seed, progress):
    if subsample < 2:
        raise ValidationError("subsample must be >= 2")
    m = text_embs.shape[0]
    streams = np.random.SeedSequence(seed).spawn(m)
    ranks = np.empty(m)
    scores = np.empty(m, dtype=np.float32)
    greater = np.empty(m, dtype=np.int64)
    tied = np.empty(m, dtype=np.int64)
    for i in tqdm(range(m), desc='ranking (subsampled)', unit='desc', disable=not progress):
        cols = _subsample_columns(np.random.default_rng(streams[i]), contrast.size, int(target_cols[i]), subsample)
        row = _cosine_block(text_embs[i:i + 1], contrast.matrix[cols], cfg)[0]
        ranks[i], greater[i], tied[i] = target_rank(row, 0)
        scores[i] = score_from_cosine(row[0], cfg)
    return ranks, scores, greater, tied, subsample
