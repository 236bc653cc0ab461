"""
HTTP Generation Client

Wire contract:

    request:  {"prompt": "...", "image_b64": "...", "model": "...", "temperature": 0.7, "seed": 1}
    response: {"text": "..."}

Optional request fields are omitted when unset. Credentials are sent as a
bearer token taken from SPECRANK_GEN_TOKEN.
"""

import logging
import time
from typing import Callable, Optional

import msgspec
import requests

from specrank.errors import BackendUnavailable, ProtocolError, ValidationError
from .interface import GenerationClient

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_BASE_SECONDS = 1.0
RETRY_STATUS = {429, 500, 502, 503, 504}
TRANSIENT_ERRORS = (requests.ConnectionError, requests.Timeout, requests.exceptions.ChunkedEncodingError)
DEFAULT_TIMEOUT = 60.0


class GenerateRequest(msgspec.Struct, omit_defaults=True):
    prompt: str
    image_b64: Optional[str] = None
    model: Optional[str] = None
    temperature: Optional[float] = None
    seed: Optional[int] = None


class GenerateResponse(msgspec.Struct):
    text: str


_request_encoder = msgspec.json.Encoder()
_response_decoder = msgspec.json.Decoder(GenerateResponse)


class HTTPGenerationClient(GenerationClient):
    """Client for a JSON-over-HTTP generation service"""

    def __init__(
        self,
        endpoint: str,
        model: str,
        token: Optional[str] = None,
        temperature: Optional[float] = None,
        timeout: float = DEFAULT_TIMEOUT,
        session: Optional[requests.Session] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint:
            raise ValidationError("HTTP generation client needs an endpoint")
        if not model:
            raise ValidationError("HTTP generation client needs a model name")
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.session = session or requests.Session()
        self._sleep = sleep
        self._headers = {'Content-Type': 'application/json'}
        if token:
            self._headers['Authorization'] = f'Bearer {token}'

    def generate(self, prompt: str, image_b64: Optional[str] = None, seed: Optional[int] = None) -> str:
        body = _request_encoder.encode(GenerateRequest(
            prompt=prompt, image_b64=image_b64, model=self.model, temperature=self.temperature, seed=seed
        ))
        last_error = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                response = self.session.post(self.endpoint, data=body, headers=self._headers, timeout=self.timeout)
            except TRANSIENT_ERRORS as e:
                last_error = e
            except requests.RequestException as e:
                raise BackendUnavailable(f"Generation request to {self.endpoint!r} failed: {e}")
            else:
                if response.status_code in RETRY_STATUS:
                    last_error = f"HTTP {response.status_code}"
                elif response.status_code >= 400:
                    raise ProtocolError(f"Generation service rejected request: HTTP {response.status_code}")
                else:
                    try:
                        return _response_decoder.decode(response.content).text
                    except msgspec.MsgspecError as e:
                        raise ProtocolError(f"Malformed generation response: {e}")

            if attempt < MAX_ATTEMPTS:
                delay = BACKOFF_BASE_SECONDS * (2 ** (attempt - 1))
                logger.warning("Generation request failed (%s); retry %d/%d in %.1fs",
                               last_error, attempt, MAX_ATTEMPTS - 1, delay)
                self._sleep(delay)

        raise BackendUnavailable(f"Generation service unavailable after {MAX_ATTEMPTS} attempts: {last_error}")

    def model_tag(self) -> str:
        tag = self.model
        if self.temperature is not None:
            tag += f';temperature={self.temperature:g}'
        return tag

    def close(self):
        self.session.close()

    def get_client_type(self) -> str:
        return 'http'
