"""
Manifest records and the immutable Dataset

A manifest is line-delimited JSON; each line is an image or a description
record distinguished by its "kind" field.
"""

import os
import tempfile
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import msgspec

from specrank.conditions import is_valid_condition
from specrank.errors import DanglingTarget, DuplicateId, MissingArtifact, ParseError

TOKEN_OVERFLOW = 'token_overflow'
MISSING_EMBEDDING = 'missing_embedding'
EXCLUSION_REASONS = (TOKEN_OVERFLOW, MISSING_EMBEDDING)


class ImageRecord(msgspec.Struct, tag_field='kind', tag='image', frozen=True, omit_defaults=True):
    image_id: str
    category: Optional[str] = None
    source_uri: Optional[str] = None
    embedding_key: Optional[str] = None
    reference_captions: Tuple[str, ...] = ()

    @property
    def store_key(self) -> str:
        return self.embedding_key or self.image_id


class DescriptionRecord(msgspec.Struct, tag_field='kind', tag='description', frozen=True, omit_defaults=True):
    desc_id: str
    target_image_id: str
    condition: str
    text: str
    char_length: int = 0
    excluded: bool = False
    exclusion_reason: Optional[str] = None
    # Generator identity for model-produced descriptions
    model_tag: Optional[str] = None

    @classmethod
    def create(
        cls, desc_id: str, target_image_id: str, condition: str, text: str, model_tag: Optional[str] = None
    ) -> 'DescriptionRecord':
        return cls(desc_id, target_image_id, condition, text, char_length(text), model_tag=model_tag)

    def exclude(self, reason: str) -> 'DescriptionRecord':
        return msgspec.structs.replace(self, excluded=True, exclusion_reason=reason)


ManifestRecord = Union[ImageRecord, DescriptionRecord]

_decoder = msgspec.json.Decoder(ManifestRecord)
_encoder = msgspec.json.Encoder()

# Optional first line of a written manifest: {"provenance": {...}}
PROVENANCE_PREFIX = b'{"provenance"'


def char_length(text: str) -> int:
    """Length in Unicode scalar values (Python code points of a decoded UTF-8 string)"""
    return len(text)


def _check_description(record: DescriptionRecord) -> Optional[str]:
    if not record.desc_id:
        return "desc_id must be non-empty"
    if not is_valid_condition(record.condition):
        return f"unknown condition {record.condition!r}"
    if record.exclusion_reason is not None and record.exclusion_reason not in EXCLUSION_REASONS:
        return f"unknown exclusion_reason {record.exclusion_reason!r}"
    if record.excluded and record.exclusion_reason is None:
        return "excluded description needs an exclusion_reason"
    return None


class Dataset:
    """
    Images and descriptions indexed by id

    Immutable after construction; "modifying" methods return a new Dataset.
    Equality ignores record order.
    """

    def __init__(self, images: Iterable[ImageRecord] = (), descriptions: Iterable[DescriptionRecord] = ()):
        image_map: Dict[str, ImageRecord] = {}
        for image in images:
            if image.image_id in image_map:
                raise DuplicateId(f"Duplicate image_id: {image.image_id!r}")
            image_map[image.image_id] = image

        desc_map: Dict[str, DescriptionRecord] = {}
        for desc in descriptions:
            if desc.desc_id in desc_map:
                raise DuplicateId(f"Duplicate desc_id: {desc.desc_id!r}")
            if desc.target_image_id not in image_map:
                raise DanglingTarget(
                    f"Description {desc.desc_id!r} targets unknown image {desc.target_image_id!r}"
                )
            desc_map[desc.desc_id] = desc

        self._images = MappingProxyType(image_map)
        self._descriptions = MappingProxyType(desc_map)

    @property
    def images(self) -> Mapping[str, ImageRecord]:
        return self._images

    @property
    def descriptions(self) -> Mapping[str, DescriptionRecord]:
        return self._descriptions

    def image_ids(self) -> List[str]:
        return sorted(self._images)

    def conditions(self) -> List[str]:
        return sorted({d.condition for d in self._descriptions.values()})

    def sorted_descriptions(self) -> List[DescriptionRecord]:
        return [self._descriptions[k] for k in sorted(self._descriptions)]

    def active_descriptions(self) -> List[DescriptionRecord]:
        """Non-excluded descriptions ordered by desc_id"""
        return [d for d in self.sorted_descriptions() if not d.excluded]

    def excluded_descriptions(self) -> List[DescriptionRecord]:
        return [d for d in self.sorted_descriptions() if d.excluded]

    def descriptions_for(self, image_id: str, condition: Optional[str] = None) -> List[DescriptionRecord]:
        return [
            d for d in self.sorted_descriptions()
            if d.target_image_id == image_id and (condition is None or d.condition == condition)
        ]

    def with_exclusions(self, reasons: Mapping[str, str]) -> 'Dataset':
        """Return a copy with the given desc_id -> reason exclusions applied"""
        for desc_id, reason in reasons.items():
            if desc_id not in self._descriptions:
                raise DanglingTarget(f"Cannot exclude unknown description {desc_id!r}")
            if reason not in EXCLUSION_REASONS:
                raise ParseError(f"unknown exclusion_reason {reason!r}")
        descriptions = [
            d.exclude(reasons[d.desc_id]) if d.desc_id in reasons else d
            for d in self._descriptions.values()
        ]
        return Dataset(self._images.values(), descriptions)

    def with_descriptions(self, new: Iterable[DescriptionRecord], replace: bool = False) -> 'Dataset':
        """
        Return a copy with new descriptions added

        With replace=True a new record supersedes the description holding its
        desc_id; otherwise an existing desc_id raises DuplicateId.
        """
        new = list(new)
        kept = self._descriptions.values()
        if replace:
            replaced = {d.desc_id for d in new}
            kept = [d for d in kept if d.desc_id not in replaced]
        return Dataset(self._images.values(), list(kept) + new)

    def shape(self) -> Tuple[int, int]:
        return len(self._images), len(self._descriptions)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return dict(self._images) == dict(other._images) and dict(self._descriptions) == dict(other._descriptions)

    def __repr__(self):
        return f"Dataset(images={len(self._images)}, descriptions={len(self._descriptions)})"


# ========== Reading / Writing ==========

def ingest_manifest(manifest_stream: Iterable[Union[str, bytes]]) -> Dataset:
    """
    Parse line-delimited manifest records into a Dataset

    char_length is always recomputed from text; a value present in the input
    is ignored.

    Raises:
        ParseError: malformed line (carries the 1-based line number)
        DuplicateId: repeated image_id or desc_id
        DanglingTarget: description targets an image absent from the manifest
    """
    images: List[ImageRecord] = []
    descriptions: List[DescriptionRecord] = []
    seen_images: Dict[str, int] = {}
    seen_descs: Dict[str, int] = {}

    for line_no, line in enumerate(manifest_stream, start=1):
        if isinstance(line, str):
            line = line.encode('utf-8')
        if not line.strip() or line.startswith(PROVENANCE_PREFIX):
            continue
        try:
            record = _decoder.decode(line)
        except msgspec.MsgspecError as e:
            raise ParseError(str(e), line_no)

        if isinstance(record, ImageRecord):
            if not record.image_id:
                raise ParseError("image_id must be non-empty", line_no)
            if record.image_id in seen_images:
                raise DuplicateId(
                    f"line {line_no}: image_id {record.image_id!r} already defined on line {seen_images[record.image_id]}"
                )
            seen_images[record.image_id] = line_no
            images.append(record)
        else:
            problem = _check_description(record)
            if problem:
                raise ParseError(problem, line_no)
            if record.desc_id in seen_descs:
                raise DuplicateId(
                    f"line {line_no}: desc_id {record.desc_id!r} already defined on line {seen_descs[record.desc_id]}"
                )
            seen_descs[record.desc_id] = line_no
            descriptions.append(msgspec.structs.replace(record, char_length=char_length(record.text)))

    return Dataset(images, descriptions)


def read_manifest(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"Manifest not found: {path}")
    with open(path, 'rb') as f:
        return ingest_manifest(f)


def encode_records(records: Iterable[msgspec.Struct]) -> bytes:
    return b''.join(_encoder.encode(r) + b'\n' for r in records)


def write_manifest(dataset: Dataset, path, provenance: Optional[Mapping[str, object]] = None) -> None:
    """Write images then descriptions, each sorted by id, replacing path atomically"""
    records: List[ManifestRecord] = [dataset.images[k] for k in dataset.image_ids()]
    records.extend(dataset.sorted_descriptions())
    header = _encoder.encode({'provenance': dict(provenance)}) + b'\n' if provenance else b''
    write_atomic(path, header + encode_records(records))


def write_atomic(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=path.name, suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
