"""
Test configuration and fixtures for specrank.

Provides small deterministic datasets, embedding stores and test doubles so
the pipeline can be exercised without any embedding or generation service.
"""

import hashlib
import os
import sys
import threading

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from specrank.embeddings import (
    Dataset, DescriptionRecord, EmbeddingStore, ImageRecord, build_contrast_set
)
from specrank.generation.clients.interface import GenerationClient


def unit_rows(rng, n, dim):
    """n random unit vectors as float64 rows."""
    block = rng.standard_normal((n, dim))
    return block / np.linalg.norm(block, axis=1, keepdims=True)


def brute_force_rank(row, target):
    """Mid-rank by explicit sorting: average of the 1-based positions tied with the target."""
    order = sorted(range(len(row)), key=lambda j: -row[j])
    positions = [pos + 1 for pos, j in enumerate(order) if row[j] == row[target]]
    return sum(positions) / len(positions)


@pytest.fixture
def rng():
    """Seeded numpy generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def five_image_fixture():
    """
    Five images on the coordinate axes of R^4 plus a diagonal, and three descriptions.

    Scores are easy to reason about by hand:
      d_exact   equals img_a          -> rank 1
      d_between halfway img_a/img_b   -> tied with img_b, rank 1.5
      d_far     closest to img_c but targets img_d -> rank 3
    """
    images = [
        ImageRecord(image_id='img_a', reference_captions=('a',) * 5),
        ImageRecord(image_id='img_b'),
        ImageRecord(image_id='img_c'),
        ImageRecord(image_id='img_d'),
        ImageRecord(image_id='img_e'),
    ]
    image_vectors = {
        'img_a': [1.0, 0.0, 0.0, 0.0],
        'img_b': [0.0, 1.0, 0.0, 0.0],
        'img_c': [0.0, 0.0, 1.0, 0.0],
        'img_d': [0.0, 0.0, 0.0, 1.0],
        'img_e': [-1.0, -1.0, -1.0, -1.0],
    }
    descriptions = [
        DescriptionRecord.create('d_exact', 'img_a', 'original', 'a thing'),
        DescriptionRecord.create('d_between', 'img_a', 'verbose', 'a thing that is described at length'),
        DescriptionRecord.create('d_far', 'img_d', 'composite', 'something else'),
    ]
    text_vectors = {
        'd_exact': [1.0, 0.0, 0.0, 0.0],
        'd_between': [1.0, 1.0, 0.0, 0.0],
        'd_far': [0.0, 0.1, 1.0, 0.05],
    }

    image_store = EmbeddingStore(4)
    for key, values in image_vectors.items():
        image_store.put(key, values)
    text_store = EmbeddingStore(4)
    for key, values in text_vectors.items():
        text_store.put(key, values)

    dataset = Dataset(images, descriptions)
    return {
        'dataset': dataset,
        'image_store': image_store.freeze(),
        'text_store': text_store.freeze(),
        'contrast': build_contrast_set(dataset, image_store),
        'expected_ranks': {'d_exact': 1.0, 'd_between': 1.5, 'd_far': 3.0},
    }


@pytest.fixture
def random_instance(rng):
    """Dataset, stores and contrast set with 60 images and 40 descriptions in dim 16."""
    n_images, n_desc, dim = 60, 40, 16
    image_vectors = unit_rows(rng, n_images, dim)
    targets = rng.integers(0, n_images, size=n_desc)
    text_vectors = unit_rows(rng, n_desc, dim) + 1.5 * image_vectors[targets]

    images = [ImageRecord(image_id=f'i{j:03d}') for j in range(n_images)]
    descriptions = [
        DescriptionRecord.create(f'd{i:03d}', f'i{targets[i]:03d}', ('original', 'verbose')[i % 2], 'x' * (10 + i))
        for i in range(n_desc)
    ]
    image_store = EmbeddingStore(dim)
    for j, vector in enumerate(image_vectors):
        image_store.put(f'i{j:03d}', vector)
    text_store = EmbeddingStore(dim)
    for i, vector in enumerate(text_vectors):
        text_store.put(f'd{i:03d}', vector)

    dataset = Dataset(images, descriptions)
    return {
        'dataset': dataset,
        'image_store': image_store.freeze(),
        'text_store': text_store.freeze(),
        'contrast': build_contrast_set(dataset, image_store),
    }


class EchoClient(GenerationClient):
    """
    Generation double returning 'V:' plus a short prompt hash.

    Prompts containing a marker in fail_once raise error on their first call;
    prompts containing a marker in empty_for come back blank. calls records
    every request received.
    """

    def __init__(self, fail_once=None, error=None, empty_for=()):
        self.fail_once = set(fail_once or ())
        self.error = error
        self.empty_for = set(empty_for)
        self.calls = []
        self._lock = threading.Lock()

    def generate(self, prompt, image_b64=None, seed=None):
        with self._lock:
            self.calls.append((prompt, image_b64, seed))
            for marker in list(self.fail_once):
                if marker in prompt:
                    self.fail_once.discard(marker)
                    raise self.error
        for marker in self.empty_for:
            if marker in prompt:
                return '   '
        return 'V:' + hashlib.sha256(prompt.encode('utf-8')).hexdigest()[:12]

    def model_tag(self):
        return 'echo-1'

    def close(self):
        pass

    def get_client_type(self):
        return 'echo'


@pytest.fixture
def echo_client():
    """Generation client double that never fails."""
    return EchoClient()
