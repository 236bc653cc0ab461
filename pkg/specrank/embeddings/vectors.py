"""
Dense embedding vectors

Values are held as little-endian float32 so they persist bit-exactly; norms and
dot products are computed in float64.
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from specrank.errors import DegenerateVector

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """Dense vector housing an image or text embedding"""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype='<f4', copy=True)
        if values.ndim != 1 or values.size == 0:
            raise DegenerateVector(f"Embedding must be a non-empty 1-d vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DegenerateVector("Embedding contains NaN or infinite values")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def of(cls, values: Union[Sequence[float], np.ndarray]) -> 'EmbeddingVector':
        return cls(np.asarray(values))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values.astype(np.float64)))

    def is_normalized(self, tol: float = NORM_TOLERANCE) -> bool:
        return abs(self.norm - 1.0) <= tol

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        # Bitwise comparison, so -0.0 != 0.0 and round-trips are checked exactly
        return self.values.tobytes() == other.values.tobytes()

    def __hash__(self):
        return hash(self.values.tobytes())


def as_vector(v) -> EmbeddingVector:
    return v if isinstance(v, EmbeddingVector) else EmbeddingVector.of(v)


def normalize(v) -> EmbeddingVector:
    """
    Scale a vector to unit L2 norm, preserving direction

    Raises:
        DegenerateVector: zero vector
    """
    v = as_vector(v)
    values = v.values.astype(np.float64)
    norm = np.linalg.norm(values)
    if norm == 0.0:
        raise DegenerateVector("Cannot normalize a zero vector")
    return EmbeddingVector(values / norm)


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-wise unit normalization of an (n, dim) block, returned as float32"""
    block = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(block, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateVector("Cannot normalize a zero row")
    return np.ascontiguousarray(block / norms, dtype=np.float32)
