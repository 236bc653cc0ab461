"""
Append-only job ledger

Each state change of a generation job is appended as one JSON line and synced
to disk before the call returns. On load the latest record for a job wins. A
torn final line (the process died mid-write) is dropped with a warning; a
malformed line anywhere else is an error.
"""

import logging
import os
import threading
from pathlib import Path
from typing import Dict, Iterable, Literal, Mapping, Optional, Union

import msgspec

from specrank.embeddings.manifest import PROVENANCE_PREFIX
from specrank.errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

PENDING = 'pending'
DONE = 'done'
FAILED = 'failed'


class GenerationJob(msgspec.Struct, frozen=True, omit_defaults=True):
    image_id: str
    condition: str
    rendered_prompt: str
    model_tag: str
    status: Literal['pending', 'done', 'failed'] = PENDING
    attachment: Optional[str] = None
    k: Optional[int] = None
    output_text: Optional[str] = None
    over_limit: bool = False
    error: Optional[str] = None
    error_type: Optional[str] = None

    @property
    def job_id(self) -> str:
        return job_id(self.image_id, self.condition)

    def done(self, text: str, over_limit: bool = False) -> 'GenerationJob':
        if not text:
            raise ValidationError("A done job needs output text")
        return msgspec.structs.replace(
            self, status=DONE, output_text=text, over_limit=over_limit, error=None, error_type=None
        )

    def failed(self, error: Exception) -> 'GenerationJob':
        return msgspec.structs.replace(
            self, status=FAILED, output_text=None, error=str(error), error_type=type(error).__name__
        )


def job_id(image_id: str, condition: str) -> str:
    """Also the desc_id of the description the job produces"""
    return f'{image_id}:{condition}'


_encoder = msgspec.json.Encoder()
_decoder = msgspec.json.Decoder(GenerationJob)


class JobLedger:
    """Line-delimited GenerationJob log at path"""

    def __init__(self, path: Union[str, Path], provenance: Optional[Mapping[str, object]] = None):
        """
        Args:
            path: Ledger file, created on first append
            provenance: Written as a header line when the ledger is created
        """
        self.path = Path(path)
        self.provenance = dict(provenance) if provenance else None
        self._lock = threading.Lock()
        self._repaired = False

    def load(self) -> Dict[str, GenerationJob]:
        """Latest record per job id; empty when the ledger does not exist yet"""
        if not self.path.exists():
            return {}
        lines = self.path.read_bytes().split(b'\n')
        jobs: Dict[str, GenerationJob] = {}
        last = max((i for i, line in enumerate(lines) if line.strip()), default=-1)
        for i, line in enumerate(lines):
            if not line.strip() or line.startswith(PROVENANCE_PREFIX):
                continue
            try:
                job = _decoder.decode(line)
            except msgspec.MsgspecError as e:
                if i == last:
                    logger.warning("Ignoring incomplete last ledger line %d in %s", i + 1, self.path)
                    continue
                raise ParseError(str(e), i + 1)
            jobs[job.job_id] = job
        return jobs

    def append(self, job: GenerationJob) -> None:
        self.extend([job])

    def extend(self, jobs: Iterable[GenerationJob]) -> None:
        payload = b''.join(_encoder.encode(job) + b'\n' for job in jobs)
        if not payload:
            return
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if not self._repaired:
                self._drop_torn_tail()
                self._repaired = True
            if self.provenance and not (self.path.exists() and self.path.stat().st_size):
                payload = _encoder.encode({'provenance': self.provenance}) + b'\n' + payload
            with open(self.path, 'ab') as f:
                f.write(payload)
                f.flush()
                os.fsync(f.fileno())

    def _drop_torn_tail(self) -> None:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        if not data or data.endswith(b'\n'):
            return
        keep = data.rfind(b'\n') + 1
        try:
            _decoder.decode(data[keep:])
        except msgspec.MsgspecError:
            pass
        else:
            with open(self.path, 'ab') as f:
                f.write(b'\n')
            return
        logger.warning("Dropping incomplete last ledger line in %s", self.path)
        with open(self.path, 'r+b') as f:
            f.truncate(keep)
            f.flush()
            os.fsync(f.fileno())
