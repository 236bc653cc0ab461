"""
Embedding Backend Factory

Provides factory functions for creating embedding backends based on configuration
"""

from dataclasses import replace
from typing import Optional

from specrank.config import Config
from specrank.errors import ValidationError
from specrank.scoring.scorer import PRECOMPUTED, REMOTE_SERVICE, ScorerConfig
from .interface import EmbeddingBackend
from .precomputed_backend import PrecomputedBackend
from .remote_backend import RemoteEmbeddingBackend


def get_embedding_backend(
    cfg: Optional[ScorerConfig] = None,
    backend_type: Optional[str] = None,
    **kwargs
) -> EmbeddingBackend:
    """
    Factory function to create the appropriate embedding backend

    Args:
        cfg: Scorer configuration (backend, endpoint, batching)
        backend_type: Overrides cfg.backend ('precomputed' or 'remote_service')
        **kwargs: Backend-specific options
            precomputed: image_path, text_path, image_store, text_store
            remote_service: token, session

    Returns:
        EmbeddingBackend instance

    Environment Variables (for remote_service):
        SPECRANK_EMBED_ENDPOINT: used when cfg.endpoint is unset
        SPECRANK_EMBED_TOKEN: bearer token

    Usage:
        # Vectors already on disk
        backend = get_embedding_backend(ScorerConfig(), image_path='img.emb', text_path='txt.emb')

        # Embedding service
        backend = get_embedding_backend(ScorerConfig(backend='remote_service', endpoint='http://...'))
    """
    cfg = cfg or ScorerConfig()
    backend_type = backend_type or cfg.backend

    if backend_type == PRECOMPUTED:
        return PrecomputedBackend(
            image_store=kwargs.get('image_store'),
            text_store=kwargs.get('text_store'),
            image_path=kwargs.get('image_path'),
            text_path=kwargs.get('text_path'),
        )

    elif backend_type == REMOTE_SERVICE:
        if not cfg.endpoint and Config.EMBED_ENDPOINT:
            cfg = replace(cfg, backend=REMOTE_SERVICE, endpoint=Config.EMBED_ENDPOINT)
        return RemoteEmbeddingBackend(
            cfg,
            token=kwargs.get('token') or Config.EMBED_TOKEN,
            session=kwargs.get('session'),
        )

    else:
        raise ValidationError(f"Unsupported embedding backend: {backend_type}")
