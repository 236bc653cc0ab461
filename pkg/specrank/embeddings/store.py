"""
Embedding persistence

File layout (all little-endian):
    magic  b"SPEC-EMB\\x01"   9 bytes
    dim    u32
    count  u64
    count x [u16 key length, UTF-8 key, dim x f32]

Vectors are stored exactly as the backend produced them (unnormalized);
normalization happens when a contrast set is assembled.
"""

import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import msgspec
import numpy as np

from specrank.embeddings.manifest import write_atomic
from specrank.embeddings.vectors import EmbeddingVector, as_vector
from specrank.errors import (
    DimMismatch, DuplicateId, FormatError, MissingEmbedding, ProtocolError, ValidationError
)

logger = logging.getLogger(__name__)

MAGIC = b'SPEC-EMB\x01'
_HEADER = struct.Struct('<IQ')
_KEY_LEN = struct.Struct('<H')
_MAX_KEY_BYTES = 0xFFFF


class EmbeddingStore:
    """
    Ordered key -> embedding mapping sharing a single dimensionality

    Iteration order is insertion order and survives a save/load round trip.
    A frozen store (as returned by load_embeddings) rejects writes and is safe
    to share across threads.
    """

    def __init__(self, dim: Optional[int] = None):
        if dim is not None and dim <= 0:
            raise ValidationError(f"dim must be positive, got {dim}")
        self._dim = dim
        self._index: Dict[str, int] = {}
        self._rows: List[np.ndarray] = []
        self._frozen = False

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> 'EmbeddingStore':
        self._frozen = True
        return self

    def put(self, key: str, vector, replace: bool = False) -> None:
        """
        Insert a vector under key

        Raises:
            DimMismatch: vector dim differs from the store's dim
            DuplicateId: key already present and replace is False
        """
        if self._frozen:
            raise ValidationError("Embedding store is frozen")
        vector = as_vector(vector)
        if self._dim is None:
            self._dim = vector.dim
        elif vector.dim != self._dim:
            raise DimMismatch(f"Vector for {key!r} has dim {vector.dim}, store has dim {self._dim}")
        if len(key.encode('utf-8')) > _MAX_KEY_BYTES:
            raise ValidationError(f"Key too long for the embedding file format: {key[:40]!r}...")

        if key in self._index:
            if not replace:
                raise DuplicateId(f"Embedding key already present: {key!r}")
            self._rows[self._index[key]] = vector.values
            return
        self._index[key] = len(self._rows)
        self._rows.append(vector.values)

    def discard(self, key: str) -> None:
        """Remove key if present; later rows keep their relative order"""
        if self._frozen:
            raise ValidationError("Embedding store is frozen")
        pos = self._index.pop(key, None)
        if pos is None:
            return
        del self._rows[pos]
        for other, other_pos in self._index.items():
            if other_pos > pos:
                self._index[other] = other_pos - 1

    def get(self, key: str) -> EmbeddingVector:
        try:
            return EmbeddingVector(self._rows[self._index[key]])
        except KeyError:
            raise MissingEmbedding(f"No embedding for {key!r}")

    def keys(self) -> List[str]:
        return list(self._index)

    def items(self) -> Iterator[Tuple[str, EmbeddingVector]]:
        for key, pos in self._index.items():
            yield key, EmbeddingVector(self._rows[pos])

    def matrix(self, keys: Optional[Sequence[str]] = None) -> np.ndarray:
        """Stack the raw vectors for keys (default: all, in store order) into an (n, dim) float32 block"""
        if keys is None:
            rows = self._rows
        else:
            missing = [k for k in keys if k not in self._index]
            if missing:
                raise MissingEmbedding(f"No embedding for {len(missing)} key(s), e.g. {missing[0]!r}")
            rows = [self._rows[self._index[k]] for k in keys]
        if not rows:
            return np.zeros((0, self._dim or 0), dtype=np.float32)
        return np.vstack(rows).astype(np.float32, copy=False)

    def __contains__(self, key) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self):
        return iter(self._index)


# ========== Persistence ==========

def save_embeddings(store: EmbeddingStore, path) -> None:
    """
    Write a store to path atomically (temp file + rename)

    Readers never observe a partially written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = store.dim or 0

    fd, tmp_name = tempfile.mkstemp(prefix=path.name, suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(MAGIC)
            f.write(_HEADER.pack(dim, len(store)))
            for key, vector in store.items():
                encoded = key.encode('utf-8')
                f.write(_KEY_LEN.pack(len(encoded)))
                f.write(encoded)
                f.write(vector.values.astype('<f4', copy=False).tobytes())
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_embeddings(path, writable: bool = False) -> EmbeddingStore:
    """
    Read an embedding file

    Args:
        path: File written by save_embeddings
        writable: Return an unfrozen store (used by the embedding cache)

    Raises:
        FormatError: bad magic, truncated data, trailing bytes or invalid payload
    """
    data = Path(path).read_bytes()
    head = len(MAGIC) + _HEADER.size
    if len(data) < head:
        raise FormatError(f"{path}: file too short for header ({len(data)} bytes)")
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic header")
    dim, count = _HEADER.unpack_from(data, len(MAGIC))
    if count and dim == 0:
        raise FormatError(f"{path}: zero dim with {count} entries")

    store = EmbeddingStore(dim or None)
    row_bytes = dim * 4
    offset = head
    for entry in range(count):
        if offset + _KEY_LEN.size > len(data):
            raise FormatError(f"{path}: truncated at entry {entry}")
        (key_len,) = _KEY_LEN.unpack_from(data, offset)
        offset += _KEY_LEN.size
        if offset + key_len + row_bytes > len(data):
            raise FormatError(f"{path}: truncated at entry {entry}")
        try:
            key = data[offset:offset + key_len].decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError(f"{path}: entry {entry} key is not valid UTF-8")
        offset += key_len
        values = np.frombuffer(data, dtype='<f4', count=dim, offset=offset)
        offset += row_bytes
        try:
            store.put(key, values)
        except (DuplicateId, ValueError) as e:
            raise FormatError(f"{path}: entry {entry}: {e}")

    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes after {count} entries")

    return store if writable else store.freeze()


# ========== Cache ==========

FINGERPRINT_SUFFIX = '.fingerprints.json'

_fingerprint_decoder = msgspec.json.Decoder(Dict[str, str])


class EmbeddingCache:
    """
    Persistent key -> embedding cache

    Image embeddings stay constant across description conditions, so each key
    is sent to the backend at most once; later calls are served from the store.
    When callers pass content fingerprints (a digest of the text or image and
    the embedding source), a key whose fingerprint changed is embedded again.
    Fingerprints live next to the embedding file in <file>.fingerprints.json.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.fingerprints: Dict[str, str] = {}
        if self.path is not None and self.path.exists():
            self.store = load_embeddings(self.path, writable=True)
            sidecar = self.fingerprint_path
            if sidecar.exists():
                try:
                    self.fingerprints = _fingerprint_decoder.decode(sidecar.read_bytes())
                except msgspec.MsgspecError as e:
                    raise FormatError(f"{sidecar}: {e}")
        else:
            self.store = EmbeddingStore()

    @property
    def fingerprint_path(self) -> Optional[Path]:
        if self.path is None:
            return None
        return self.path.with_name(self.path.name + FINGERPRINT_SUFFIX)

    def _fresh(self, key: str, fingerprints: Optional[Mapping[str, str]]) -> bool:
        if key not in self.store:
            return False
        if fingerprints is None or key not in fingerprints:
            return True
        return self.fingerprints.get(key) == fingerprints[key]

    def get_or_embed(
        self,
        keys: Sequence[str],
        embed_fn: Callable[[List[str]], Sequence[Optional[EmbeddingVector]]],
        fingerprints: Optional[Mapping[str, str]] = None,
    ) -> List[Optional[EmbeddingVector]]:
        """
        Return one vector per key, calling embed_fn only for keys not cached yet

        Args:
            keys: Keys to resolve (duplicates are embedded once)
            embed_fn: Called with the missing keys; returns one vector (or None
                for an excluded item) per key, in order
            fingerprints: Optional key -> content digest; a cached key whose
                recorded digest differs is treated as missing

        Returns:
            Vectors aligned with keys; None where embed_fn returned None

        Raises:
            ProtocolError: embed_fn returned a different number of vectors than keys
        """
        missing = list(dict.fromkeys(key for key in keys if not self._fresh(key, fingerprints)))

        skipped = set()
        if missing:
            vectors = embed_fn(missing)
            if len(vectors) != len(missing):
                raise ProtocolError(f"Embedding source returned {len(vectors)} vectors for {len(missing)} keys")
            for key, vector in zip(missing, vectors):
                if vector is None:
                    skipped.add(key)
                    self.store.discard(key)
                    self.fingerprints.pop(key, None)
                    continue
                self.store.put(key, vector, replace=True)
                if fingerprints is not None and key in fingerprints:
                    self.fingerprints[key] = fingerprints[key]
            logger.info("Embedded %d key(s); %d served from cache", len(missing), len(keys) - len(missing))

        return [None if key in skipped else self.store.get(key) for key in keys]

    def flush(self) -> None:
        if self.path is not None:
            save_embeddings(self.store, self.path)
            write_atomic(self.fingerprint_path, msgspec.json.encode(self.fingerprints))
