"""
CSV artifacts with provenance

Each table starts with '# key=value' comment lines (config checksum and
seeds) followed by a plain CSV body, so the body stays readable by any CSV
tool that skips comment lines.
"""

import io
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import pandas as pd

from specrank.embeddings.manifest import write_atomic
from specrank.errors import MissingArtifact, ParseError

COMMENT = '#'


def provenance_header(provenance: Optional[Mapping[str, object]]) -> str:
    if not provenance:
        return ''
    return ''.join(f'{COMMENT} {key}={provenance[key]}\n' for key in sorted(provenance))


def write_table(frame: pd.DataFrame, path: Union[str, Path], provenance: Optional[Mapping[str, object]] = None) -> Path:
    """Write frame as CSV behind a provenance header, replacing path atomically"""
    body = frame.to_csv(index=False, lineterminator='\n', float_format='%.10g')
    write_atomic(path, (provenance_header(provenance) + body).encode('utf-8'))
    return Path(path)


def read_table(path: Union[str, Path]) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """
    Read a table written by write_table

    Returns:
        (frame, provenance) with provenance values as strings

    Raises:
        MissingArtifact: file does not exist
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"Required artifact not found: {path}")
    text = path.read_text(encoding='utf-8')
    provenance: Dict[str, str] = {}
    lines = text.split('\n')
    body_start = 0
    for body_start, line in enumerate(lines):
        if not line.startswith(COMMENT):
            break
        key, sep, value = line[1:].strip().partition('=')
        if not sep:
            raise ParseError(f"{path.name}: malformed provenance line {line!r}", body_start + 1)
        provenance[key] = value
    body = '\n'.join(lines[body_start:])
    if not body.strip():
        return pd.DataFrame(), provenance
    return pd.read_csv(io.StringIO(body)), provenance
