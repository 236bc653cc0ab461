from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from specrank.embeddings.manifest import Dataset
from specrank.embeddings.store import EmbeddingStore
from specrank.embeddings.vectors import NORM_TOLERANCE, normalize_rows
from specrank.errors import DanglingTarget, DimMismatch, ValidationError


@dataclass(frozen=True, eq=False)
class ContrastSet:
    """
    Alternative images a description is ranked against

    matrix row i is the unit-normalized embedding of image_ids[i]. The matrix
    is read-only so one instance can be shared by all ranking workers.
    """

    image_ids: Tuple[str, ...]
    matrix: np.ndarray
    _index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float32, order='C', copy=True)
        if matrix.ndim != 2:
            raise DimMismatch(f"Contrast matrix must be 2-d, got shape {matrix.shape}")
        if matrix.shape[0] != len(self.image_ids):
            raise DimMismatch(f"{matrix.shape[0]} rows for {len(self.image_ids)} image ids")
        if len(self.image_ids) < 2:
            raise ValidationError("A contrast set needs at least 2 images")
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise ValidationError("Contrast matrix rows must be unit-normalized")
        index = {image_id: i for i, image_id in enumerate(self.image_ids)}
        if len(index) != len(self.image_ids):
            raise ValidationError("Contrast set image ids must be unique")
        matrix.setflags(write=False)
        object.__setattr__(self, 'image_ids', tuple(self.image_ids))
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, '_index', index)

    @property
    def size(self) -> int:
        return len(self.image_ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def position(self, image_id: str) -> int:
        try:
            return self._index[image_id]
        except KeyError:
            raise DanglingTarget(f"Image {image_id!r} is not in the contrast set")

    def __contains__(self, image_id) -> bool:
        return image_id in self._index


def build_contrast_set(
    dataset: Dataset,
    image_store: EmbeddingStore,
    image_ids: Optional[Sequence[str]] = None,
) -> ContrastSet:
    """
    Assemble a normalized contrast set from stored (raw) image embeddings

    Args:
        dataset: Dataset supplying image records (and their embedding keys)
        image_store: Raw image embeddings
        image_ids: Images to include, in order; defaults to every dataset image sorted by id

    Raises:
        DanglingTarget: an id is not a dataset image
        MissingEmbedding: an image has no stored embedding
    """
    ids = list(image_ids) if image_ids is not None else dataset.image_ids()
    unknown = [i for i in ids if i not in dataset.images]
    if unknown:
        raise DanglingTarget(f"{len(unknown)} contrast image id(s) not in dataset, e.g. {unknown[0]!r}")
    keys = [dataset.images[i].store_key for i in ids]
    return ContrastSet(tuple(ids), normalize_rows(image_store.matrix(keys)))
