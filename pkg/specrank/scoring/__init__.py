"""
Compatibility scoring

cosine / clip_score plus the backend layer that produces embeddings.
"""

from .scorer import ScorerConfig, clip_score, cosine, score_from_cosine

__all__ = ['ScorerConfig', 'clip_score', 'cosine', 'score_from_cosine']
