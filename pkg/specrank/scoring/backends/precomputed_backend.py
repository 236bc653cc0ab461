"""
Precomputed Embedding Backend

Serves embeddings already written to embedding files, keyed by desc_id for
descriptions and by embedding_key (or image_id) for images.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence

from specrank.embeddings.manifest import MISSING_EMBEDDING, DescriptionRecord, ImageRecord
from specrank.embeddings.store import EmbeddingStore, load_embeddings
from specrank.errors import MissingArtifact
from .interface import EmbeddingBackend, EmbeddingBatch, content_digest

logger = logging.getLogger(__name__)


class PrecomputedBackend(EmbeddingBackend):
    """Backend over two embedding files (images and texts)"""

    def __init__(
        self,
        image_store: Optional[EmbeddingStore] = None,
        text_store: Optional[EmbeddingStore] = None,
        image_path=None,
        text_path=None,
    ):
        """
        Args:
            image_store / text_store: In-memory stores (take precedence)
            image_path / text_path: Embedding files to load when no store is given
        """
        self.image_store = image_store if image_store is not None else self._load(image_path)
        self.text_store = text_store if text_store is not None else self._load(text_path)

    @staticmethod
    def _load(path) -> EmbeddingStore:
        if path is None:
            return EmbeddingStore().freeze()
        if not Path(path).exists():
            raise MissingArtifact(f"Embedding file not found: {path}")
        return load_embeddings(path)

    def _lookup(self, store: EmbeddingStore, keys) -> EmbeddingBatch:
        batch = EmbeddingBatch(vectors=[])
        for i, key in enumerate(keys):
            if key in store:
                batch.vectors.append(store.get(key))
            else:
                batch.vectors.append(None)
                batch.exclusions[i] = MISSING_EMBEDDING
        if batch.exclusions:
            logger.warning("%d of %d item(s) have no precomputed embedding", len(batch.exclusions), len(keys))
        return batch

    def embed_descriptions(self, records: Sequence[DescriptionRecord]) -> EmbeddingBatch:
        return self._lookup(self.text_store, [r.desc_id for r in records])

    def embed_images(self, records: Sequence[ImageRecord]) -> EmbeddingBatch:
        return self._lookup(self.image_store, [r.store_key for r in records])

    @staticmethod
    def _stored_digest(store: EmbeddingStore, key: str) -> str:
        if key not in store:
            return content_digest('missing', key)
        return content_digest(key, store.get(key).values.astype('<f4', copy=False).tobytes())

    def description_fingerprint(self, record: DescriptionRecord) -> str:
        return self._stored_digest(self.text_store, record.desc_id)

    def image_fingerprint(self, record: ImageRecord) -> str:
        return self._stored_digest(self.image_store, record.store_key)

    def close(self):
        pass

    def ping(self) -> bool:
        return True

    def get_backend_type(self) -> str:
        return 'precomputed'
