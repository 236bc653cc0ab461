"""
Image-text compatibility score

clip_score(t, i) = w * max(cos(t, i), 0) with w = 2.5 by default. Both the
weight and the clamp are configurable; ranks do not depend on either as long
as the target's cosine is positive.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from specrank.embeddings.vectors import as_vector
from specrank.errors import DegenerateVector, DimMismatch, ValidationError

PRECOMPUTED = 'precomputed'
REMOTE_SERVICE = 'remote_service'
BACKENDS = (PRECOMPUTED, REMOTE_SERVICE)


@dataclass(frozen=True)
class ScorerConfig:
    weight_w: float = 2.5
    clamp_at_zero: bool = True
    token_limit: Optional[int] = 77
    backend: str = PRECOMPUTED
    endpoint: Optional[str] = None
    batch_size: int = 64
    max_in_flight: int = 4
    timeout: float = 30.0

    def __post_init__(self):
        if not self.weight_w > 0:
            raise ValidationError(f"weight_w must be > 0, got {self.weight_w}")
        if self.token_limit is not None and self.token_limit < 1:
            raise ValidationError(f"token_limit must be >= 1, got {self.token_limit}")
        if self.backend not in BACKENDS:
            raise ValidationError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == REMOTE_SERVICE and not self.endpoint:
            raise ValidationError("remote_service backend needs an endpoint")
        if self.batch_size < 1 or self.max_in_flight < 1:
            raise ValidationError("batch_size and max_in_flight must be >= 1")


def cosine(a, b) -> float:
    """
    Cosine similarity, clamped into [-1, 1] against rounding drift

    Raises:
        DimMismatch: vectors differ in length
        DegenerateVector: either vector is zero
    """
    a = as_vector(a).values.astype(np.float64)
    b = as_vector(b).values.astype(np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"Cannot compare dim {a.shape[0]} with dim {b.shape[0]}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateVector("Cosine is undefined for a zero vector")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return min(1.0, max(-1.0, value))


def score_from_cosine(cos, cfg: ScorerConfig):
    """Apply the w * max(cos, 0) map to a scalar or an array of cosines"""
    if cfg.clamp_at_zero:
        cos = np.maximum(cos, 0)
    result = cfg.weight_w * cos
    if isinstance(result, np.ndarray):
        return result.astype(np.asarray(cos).dtype, copy=False)
    return float(result)


def clip_score(text_emb, image_emb, cfg: Optional[ScorerConfig] = None) -> float:
    """CLIPScore-form compatibility of one description with one image"""
    cfg = cfg or ScorerConfig()
    return score_from_cosine(cosine(text_emb, image_emb), cfg)
