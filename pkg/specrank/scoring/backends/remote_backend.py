"""
Remote Embedding Backend

Talks to an embedding service over HTTP:

    request:  {"kind": "text" | "image", "items": [...], "token_limit": 77}
    response: {"dim": D, "embeddings": [[f32, ...], ...], "overflow_indices": [i, ...]}

Image items are base64 payloads. Batches are the unit of retry; requests are
idempotent reads so a failed batch is simply sent again.
"""

import base64
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import msgspec
import requests

from specrank.embeddings.manifest import MISSING_EMBEDDING, TOKEN_OVERFLOW, DescriptionRecord, ImageRecord
from specrank.embeddings.vectors import EmbeddingVector
from specrank.errors import BackendUnavailable, DegenerateVector, ProtocolError, ValidationError
from specrank.scoring.scorer import ScorerConfig
from .interface import EmbeddingBackend, EmbeddingBatch, content_digest

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 0.5
RETRY_STATUS = {429, 500, 502, 503, 504}
TRANSIENT_ERRORS = (requests.ConnectionError, requests.Timeout, requests.exceptions.ChunkedEncodingError)

TEXT = 'text'
IMAGE = 'image'


class EmbedRequest(msgspec.Struct, omit_defaults=True):
    kind: str
    items: List[str]
    token_limit: Optional[int] = None


class EmbedResponse(msgspec.Struct):
    dim: int
    embeddings: List[List[float]]
    overflow_indices: List[int] = []


_response_decoder = msgspec.json.Decoder(EmbedResponse)
_request_encoder = msgspec.json.Encoder()


def _post_with_retries(
    session: requests.Session,
    endpoint: str,
    body: bytes,
    timeout: float,
    headers: Dict[str, str],
    sleep: Callable[[float], None],
) -> EmbedResponse:
    last_error = None
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            response = session.post(endpoint, data=body, headers=headers, timeout=timeout)
        except TRANSIENT_ERRORS as e:
            last_error = e
        except requests.RequestException as e:
            raise BackendUnavailable(f"Embedding request to {endpoint!r} failed: {e}")
        else:
            if response.status_code in RETRY_STATUS:
                last_error = f"HTTP {response.status_code}"
            elif response.status_code >= 400:
                raise ProtocolError(f"Embedding service rejected request: HTTP {response.status_code}")
            else:
                try:
                    return _response_decoder.decode(response.content)
                except msgspec.MsgspecError as e:
                    raise ProtocolError(f"Malformed embedding response: {e}")

        if attempt < MAX_ATTEMPTS:
            delay = BACKOFF_BASE_SECONDS * (2 ** (attempt - 1))
            logger.warning("Embedding request failed (%s); retry %d/%d in %.1fs",
                           last_error, attempt, MAX_ATTEMPTS - 1, delay)
            sleep(delay)

    raise BackendUnavailable(f"Embedding service unavailable after {MAX_ATTEMPTS} attempts: {last_error}")


def _unpack(response: EmbedResponse, n_items: int) -> EmbeddingBatch:
    overflow = sorted(set(response.overflow_indices))
    if any(i < 0 or i >= n_items for i in overflow):
        raise ProtocolError(f"overflow index out of range for a batch of {n_items}")
    if response.dim <= 0:
        raise ProtocolError(f"Invalid dim {response.dim}")

    n_vectors = len(response.embeddings)
    if n_vectors == n_items:
        positions = list(range(n_items))
    elif n_vectors == n_items - len(overflow):
        overflowed = set(overflow)
        positions = [i for i in range(n_items) if i not in overflowed]
    else:
        raise ProtocolError(f"Service returned {n_vectors} embeddings for {n_items} inputs")

    batch = EmbeddingBatch(vectors=[None] * n_items)
    for position, values in zip(positions, response.embeddings):
        if position in overflow:
            continue
        if len(values) != response.dim:
            raise ProtocolError(f"Embedding of length {len(values)} does not match dim {response.dim}")
        try:
            batch.vectors[position] = EmbeddingVector.of(values)
        except DegenerateVector as e:
            raise ProtocolError(f"Invalid embedding values: {e}")
    for i in overflow:
        batch.exclusions[i] = TOKEN_OVERFLOW
    return batch


def embed_remote(
    items: Sequence[str],
    cfg: ScorerConfig,
    kind: str = TEXT,
    session: Optional[requests.Session] = None,
    token: Optional[str] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> EmbeddingBatch:
    """
    Embed a batch of texts or base64 image payloads through the remote service

    Args:
        items: Texts, or base64-encoded image payloads when kind == 'image'
        cfg: Scorer config carrying endpoint, batch size, in-flight limit, timeout
        kind: 'text' or 'image'
        session: Optional requests session (one is created otherwise)
        token: Bearer token sent in the Authorization header
        sleep: Backoff sleep function (injectable for tests)

    Returns:
        EmbeddingBatch aligned with items; texts the service flags as over the
        token limit come back as token_overflow exclusions

    Raises:
        BackendUnavailable: a batch still fails after MAX_ATTEMPTS
        ProtocolError: response count or shape mismatch
    """
    if not cfg.endpoint:
        raise ValidationError("No embedding endpoint configured")
    if kind not in (TEXT, IMAGE):
        raise ValidationError(f"kind must be 'text' or 'image', got {kind!r}")
    if not items:
        raise ValidationError("Cannot embed an empty batch")

    own_session = session is None
    session = session or requests.Session()
    headers = {'Content-Type': 'application/json'}
    if token:
        headers['Authorization'] = f'Bearer {token}'

    chunks = [list(items[i:i + cfg.batch_size]) for i in range(0, len(items), cfg.batch_size)]

    def run(chunk: List[str]) -> EmbeddingBatch:
        body = _request_encoder.encode(EmbedRequest(
            kind=kind, items=chunk, token_limit=cfg.token_limit if kind == TEXT else None
        ))
        response = _post_with_retries(session, cfg.endpoint, body, cfg.timeout, headers, sleep)
        return _unpack(response, len(chunk))

    try:
        with ThreadPoolExecutor(max_workers=min(cfg.max_in_flight, len(chunks))) as pool:
            parts = list(pool.map(run, chunks))
    finally:
        if own_session:
            session.close()

    result = EmbeddingBatch(vectors=[])
    dims = {p.dim for p in parts if p.dim is not None}
    if len(dims) > 1:
        raise ProtocolError(f"Service returned mixed dims across batches: {sorted(dims)}")
    for chunk_no, part in enumerate(parts):
        offset = chunk_no * cfg.batch_size
        for i, reason in part.exclusions.items():
            result.exclusions[offset + i] = reason
        result.vectors.extend(part.vectors)
    return result


class RemoteEmbeddingBackend(EmbeddingBackend):
    """Backend calling a remote embedding service"""

    def __init__(self, cfg: ScorerConfig, token: Optional[str] = None, session: Optional[requests.Session] = None):
        if not cfg.endpoint:
            raise ValidationError("remote_service backend needs an endpoint")
        self.cfg = cfg
        self.token = token
        self.session = session or requests.Session()

    def embed_descriptions(self, records: Sequence[DescriptionRecord]) -> EmbeddingBatch:
        if not records:
            return EmbeddingBatch(vectors=[])
        return embed_remote([r.text for r in records], self.cfg, TEXT, self.session, self.token)

    def embed_images(self, records: Sequence[ImageRecord]) -> EmbeddingBatch:
        """Read each image from its local source_uri; images without a readable file are excluded"""
        payloads: List[str] = []
        readable: List[int] = []
        for i, record in enumerate(records):
            path = Path(record.source_uri) if record.source_uri else None
            if path is None or not path.is_file():
                logger.warning("Image %s has no local file at source_uri=%r", record.image_id, record.source_uri)
                continue
            payloads.append(base64.b64encode(path.read_bytes()).decode('ascii'))
            readable.append(i)

        batch = EmbeddingBatch(vectors=[None] * len(records))
        readable_set = set(readable)
        for i in range(len(records)):
            if i not in readable_set:
                batch.exclusions[i] = MISSING_EMBEDDING
        if payloads:
            remote = embed_remote(payloads, self.cfg, IMAGE, self.session, self.token)
            for local, original in enumerate(readable):
                batch.vectors[original] = remote.vectors[local]
                if local in remote.exclusions:
                    batch.exclusions[original] = remote.exclusions[local]
        return batch

    def description_fingerprint(self, record: DescriptionRecord) -> str:
        return content_digest(self.cfg.endpoint, str(self.cfg.token_limit), record.text)

    def image_fingerprint(self, record: ImageRecord) -> str:
        path = Path(record.source_uri) if record.source_uri else None
        if path is None or not path.is_file():
            return content_digest(self.cfg.endpoint, 'unreadable', record.source_uri or '')
        return content_digest(self.cfg.endpoint, path.read_bytes())

    def close(self):
        self.session.close()

    def ping(self) -> bool:
        try:
            response = self.session.head(self.cfg.endpoint, timeout=self.cfg.timeout)
            return response.status_code < 500
        except requests.RequestException:
            return False

    def get_backend_type(self) -> str:
        return 'remote_service'
