"""
Rank result records and their line-delimited file format

The first line of a rank file is a provenance header
({"provenance": {...}}); every following line is one RankResult.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import msgspec

from specrank.embeddings.manifest import write_atomic
from specrank.errors import MissingArtifact, ParseError


class RankResult(msgspec.Struct, frozen=True):
    desc_id: str
    condition: str
    target_rank: float
    target_score: float
    n_contrast: int
    n_strictly_greater: int
    n_tied: int
    char_length: int


class ExcludedRecord(msgspec.Struct, frozen=True):
    desc_id: str
    condition: str
    exclusion_reason: str


class _Provenance(msgspec.Struct):
    provenance: Dict[str, object]


_encoder = msgspec.json.Encoder()
_PROVENANCE_PREFIX = b'{"provenance"'


def encode_lines(records: Iterable[msgspec.Struct], provenance: Optional[Dict] = None) -> bytes:
    lines = []
    if provenance is not None:
        lines.append(_encoder.encode(_Provenance(provenance)))
    lines.extend(_encoder.encode(r) for r in records)
    return b''.join(line + b'\n' for line in lines)


def decode_lines(path, record_type) -> Tuple[List, Dict]:
    """
    Read a line-delimited file of record_type, returning (records, provenance)

    Raises:
        MissingArtifact: file does not exist
        ParseError: malformed line
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"Required artifact not found: {path}")
    decoder = msgspec.json.Decoder(record_type)
    provenance: Dict = {}
    records = []
    with open(path, 'rb') as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                if line.startswith(_PROVENANCE_PREFIX):
                    provenance = msgspec.json.decode(line, type=_Provenance).provenance
                    continue
                records.append(decoder.decode(line))
            except msgspec.MsgspecError as e:
                raise ParseError(f"{path.name}: {e}", line_no)
    return records, provenance


def write_rank_records(results: Iterable[RankResult], path, provenance: Optional[Dict] = None) -> None:
    write_atomic(path, encode_lines(results, provenance))


def read_rank_records(path) -> List[RankResult]:
    records, _ = decode_lines(path, RankResult)
    return records


def write_excluded_records(records: Iterable[ExcludedRecord], path, provenance: Optional[Dict] = None) -> None:
    write_atomic(path, encode_lines(records, provenance))


def read_excluded_records(path) -> List[ExcludedRecord]:
    records, _ = decode_lines(path, ExcludedRecord)
    return records
