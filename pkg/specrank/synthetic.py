"""
Synthetic three-condition corpus

Image embeddings are random unit vectors. A description of image t under a
condition with noise level s is embedded as normalize(e_t + s * z) with z
drawn from a standard normal per dimension, so lower noise means a more
specific description. Texts are filler words of a condition-specific length,
which lets length and specificity be varied independently.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Tuple

import numpy as np

from specrank.conditions import COMPOSITE, ORIGINAL, VERBOSE
from specrank.embeddings.manifest import Dataset, DescriptionRecord, ImageRecord
from specrank.embeddings.store import EmbeddingStore
from specrank.embeddings.vectors import normalize_rows

_WORDS = (
    'a', 'man', 'woman', 'dog', 'cat', 'red', 'blue', 'small', 'large', 'table', 'street', 'car',
    'standing', 'sitting', 'next', 'to', 'on', 'the', 'with', 'near', 'tree', 'building', 'white',
    'green', 'plate', 'food', 'bus', 'train', 'field', 'grass', 'window', 'people', 'holding',
)


class ConditionProfile(NamedTuple):
    noise: float
    mean_length: float
    sd_length: float


# Composite descriptions are the most specific; original and verbose share a
# noise level but differ in length.
DEFAULT_PROFILES: Dict[str, ConditionProfile] = {
    ORIGINAL: ConditionProfile(noise=0.6, mean_length=50, sd_length=10),
    VERBOSE: ConditionProfile(noise=0.6, mean_length=110, sd_length=15),
    COMPOSITE: ConditionProfile(noise=0.25, mean_length=120, sd_length=15),
}

N_REFERENCE_CAPTIONS = 5


@dataclass(frozen=True)
class SyntheticCorpus:
    dataset: Dataset
    image_store: EmbeddingStore
    text_store: EmbeddingStore


def random_unit_vectors(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return normalize_rows(rng.standard_normal((n, dim)))


def noisy_descriptions(targets: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    """normalize(target + noise * z) for each target row"""
    targets = np.asarray(targets, dtype=np.float64)
    if noise == 0:
        return normalize_rows(targets)
    return normalize_rows(targets + noise * rng.standard_normal(targets.shape))


def filler_text(length: int, rng: np.random.Generator) -> str:
    """Words joined by spaces, cut to exactly length characters (at least 1)"""
    length = max(1, int(length))
    words: List[str] = []
    size = -1
    while size < length:
        word = _WORDS[rng.integers(len(_WORDS))]
        words.append(word)
        size += len(word) + 1
    text = ' '.join(words)[:length]
    # A trailing space would be lost on strip() elsewhere
    return text[:-1] + 'x' if text.endswith(' ') else text


def _draw_length(profile: ConditionProfile, rng: np.random.Generator) -> int:
    return max(5, int(round(rng.normal(profile.mean_length, profile.sd_length))))


def build_synthetic_corpus(
    n_images: int = 300,
    dim: int = 64,
    seed: int = 0,
    profiles: Mapping[str, ConditionProfile] = DEFAULT_PROFILES,
) -> SyntheticCorpus:
    """
    One description per (image, condition) plus embeddings for all of them

    Description ids are '<image_id>:<condition>'; each image carries five
    filler reference captions, the first of which is also its original text.
    """
    streams = np.random.SeedSequence(seed).spawn(2 + len(profiles))
    image_rng = np.random.Generator(np.random.PCG64(streams[0]))
    caption_rng = np.random.Generator(np.random.PCG64(streams[1]))

    image_ids = [f'img{i:05d}' for i in range(n_images)]
    image_vectors = random_unit_vectors(n_images, dim, image_rng)
    image_store = EmbeddingStore(dim)
    images = []
    for image_id, vector in zip(image_ids, image_vectors):
        image_store.put(image_id, vector)
        captions = tuple(
            filler_text(_draw_length(DEFAULT_PROFILES[ORIGINAL], caption_rng), caption_rng)
            for _ in range(N_REFERENCE_CAPTIONS)
        )
        images.append(ImageRecord(image_id=image_id, category='synthetic', reference_captions=captions))

    text_store = EmbeddingStore(dim)
    descriptions = []
    for stream, (condition, profile) in zip(streams[2:], sorted(profiles.items())):
        rng = np.random.Generator(np.random.PCG64(stream))
        vectors = noisy_descriptions(image_vectors, profile.noise, rng)
        for image, vector in zip(images, vectors):
            if condition == ORIGINAL:
                text = image.reference_captions[0]
            else:
                text = filler_text(_draw_length(profile, rng), rng)
            desc_id = f'{image.image_id}:{condition}'
            descriptions.append(DescriptionRecord.create(desc_id, image.image_id, condition, text))
            text_store.put(desc_id, vector)

    return SyntheticCorpus(Dataset(images, descriptions), image_store.freeze(), text_store.freeze())


def sigma_sweep(
    sigmas: Tuple[float, ...],
    n_images: int,
    dim: int,
    per_level: int,
    seed: int = 0,
) -> Tuple[np.ndarray, Dict[float, Tuple[np.ndarray, np.ndarray]]]:
    """
    Random contrast images plus, per noise level, (target_index, embeddings)

    Targets for each level are drawn uniformly with replacement from the images.
    """
    streams = np.random.SeedSequence(seed).spawn(1 + len(sigmas))
    images = random_unit_vectors(n_images, dim, np.random.Generator(np.random.PCG64(streams[0])))
    levels = {}
    for sigma, stream in zip(sigmas, streams[1:]):
        rng = np.random.Generator(np.random.PCG64(stream))
        targets = rng.integers(0, n_images, size=per_level)
        levels[sigma] = (targets, noisy_descriptions(images[targets], sigma, rng))
    return images, levels
