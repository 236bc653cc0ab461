"""
Embedding backend layer

Provides a unified interface for obtaining embeddings that works with:
- Precomputed embedding files
- A remote embedding service

Any model that yields image and text embeddings can sit behind this interface.
"""

from .interface import EmbeddingBackend, EmbeddingBatch
from .factory import get_embedding_backend
from .precomputed_backend import PrecomputedBackend
from .remote_backend import RemoteEmbeddingBackend, embed_remote

__all__ = [
    'EmbeddingBackend',
    'EmbeddingBatch',
    'get_embedding_backend',
    'PrecomputedBackend',
    'RemoteEmbeddingBackend',
    'embed_remote',
]
