"""
Embedding Backend Interface

Defines the abstract interface that all embedding backends must implement
"""

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

from specrank.embeddings.manifest import DescriptionRecord, ImageRecord
from specrank.embeddings.vectors import EmbeddingVector


def content_digest(*parts: Union[str, bytes]) -> str:
    """sha256 over length-prefixed parts, so ('ab', 'c') and ('a', 'bc') differ"""
    digest = hashlib.sha256()
    for part in parts:
        data = part.encode('utf-8') if isinstance(part, str) else part
        digest.update(len(data).to_bytes(8, 'little'))
        digest.update(data)
    return digest.hexdigest()


@dataclass
class EmbeddingBatch:
    """
    Backend output for one request

    vectors is aligned with the request items; an excluded item has None in
    its slot and an entry in exclusions (index -> exclusion reason).
    """

    vectors: List[Optional[EmbeddingVector]]
    exclusions: Dict[int, str] = field(default_factory=dict)

    @property
    def dim(self) -> Optional[int]:
        for vector in self.vectors:
            if vector is not None:
                return vector.dim
        return None


class EmbeddingBackend(ABC):
    """
    Abstract base class for embedding backends

    All backends (precomputed files, remote embedding service) must implement
    these methods so the pipeline does not care where vectors come from.
    """

    @abstractmethod
    def embed_descriptions(self, records: Sequence[DescriptionRecord]) -> EmbeddingBatch:
        """
        Embed description texts

        Args:
            records: Descriptions to embed

        Returns:
            One slot per record; texts over the token limit or without a
            stored vector are returned as exclusions, not errors
        """
        pass

    @abstractmethod
    def embed_images(self, records: Sequence[ImageRecord]) -> EmbeddingBatch:
        """
        Embed images

        Args:
            records: Images to embed

        Returns:
            One slot per record
        """
        pass

    # ========== Cache Fingerprints ==========

    def description_fingerprint(self, record: DescriptionRecord) -> str:
        """
        Digest of everything that determines a description's embedding

        A cached vector is reused only while this value is unchanged.
        """
        return content_digest(self.get_backend_type(), record.text)

    def image_fingerprint(self, record: ImageRecord) -> str:
        """Digest of everything that determines an image's embedding"""
        return content_digest(self.get_backend_type(), record.store_key, record.source_uri or '')

    # ========== Connection Management ==========

    @abstractmethod
    def close(self):
        """Release any held resources"""
        pass

    @abstractmethod
    def ping(self) -> bool:
        """
        Test that the backend is usable

        Returns:
            True if reachable / readable, False otherwise
        """
        pass

    @abstractmethod
    def get_backend_type(self) -> str:
        """
        Get the type of backend

        Returns:
            String identifier ('precomputed', 'remote_service')
        """
        pass
