"""
Embedding store

Manifest ingestion, embedding vectors, bit-exact persistence and contrast-set
assembly.
"""

from .vectors import EmbeddingVector, normalize, normalize_rows
from .store import EmbeddingCache, EmbeddingStore, load_embeddings, save_embeddings
from .manifest import (
    MISSING_EMBEDDING,
    TOKEN_OVERFLOW,
    Dataset,
    DescriptionRecord,
    ImageRecord,
    char_length,
    ingest_manifest,
    read_manifest,
    write_manifest,
)
from .contrast import ContrastSet, build_contrast_set

__all__ = [
    'MISSING_EMBEDDING',
    'TOKEN_OVERFLOW',
    'EmbeddingVector',
    'normalize',
    'normalize_rows',
    'EmbeddingCache',
    'EmbeddingStore',
    'load_embeddings',
    'save_embeddings',
    'Dataset',
    'DescriptionRecord',
    'ImageRecord',
    'char_length',
    'ingest_manifest',
    'read_manifest',
    'write_manifest',
    'ContrastSet',
    'build_contrast_set',
]
