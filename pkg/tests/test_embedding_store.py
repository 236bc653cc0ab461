"""
Tests for embedding vectors, the embedding file format, the cache and contrast sets.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specrank.embeddings import (
    ContrastSet, EmbeddingCache, EmbeddingStore, EmbeddingVector, build_contrast_set,
    load_embeddings, normalize, save_embeddings
)
from specrank.embeddings.store import MAGIC
from specrank.errors import (
    DanglingTarget, DegenerateVector, DimMismatch, DuplicateId, FormatError, MissingEmbedding,
    ProtocolError, ValidationError
)


class TestEmbeddingVector:
    """Test vector construction and normalization."""

    def test_rejects_non_finite_values(self):
        """Test that NaN or infinite components are refused."""
        with pytest.raises(DegenerateVector):
            EmbeddingVector.of([1.0, float('nan')])
        with pytest.raises(DegenerateVector):
            EmbeddingVector.of([float('inf'), 0.0])

    def test_rejects_empty_vector(self):
        """Test that a zero-length vector is refused."""
        with pytest.raises(DegenerateVector):
            EmbeddingVector.of([])

    def test_does_not_freeze_caller_array(self):
        """Test that the caller's array stays writable after wrapping."""
        values = np.ones(3, dtype='<f4')
        vector = EmbeddingVector(values)
        values[0] = 5.0
        assert vector.values[0] == 1.0
        assert not vector.values.flags.writeable

    def test_normalize_gives_unit_norm(self):
        """Test that normalize returns a unit vector in the same direction."""
        vector = normalize([3.0, 4.0])
        assert vector.is_normalized()
        np.testing.assert_allclose(vector.values, [0.6, 0.8], rtol=1e-6)

    def test_normalize_zero_vector_fails(self):
        """Test that normalizing the zero vector raises DegenerateVector."""
        with pytest.raises(DegenerateVector):
            normalize([0.0, 0.0, 0.0])


class TestEmbeddingStore:
    """Test in-memory store behaviour."""

    def test_dim_mismatch(self):
        """Test that a vector of another dimension is rejected."""
        store = EmbeddingStore(3)
        with pytest.raises(DimMismatch):
            store.put('k', [1.0, 2.0])

    def test_duplicate_key(self):
        """Test that re-putting a key requires replace=True."""
        store = EmbeddingStore()
        store.put('k', [1.0, 2.0])
        with pytest.raises(DuplicateId):
            store.put('k', [3.0, 4.0])
        store.put('k', [3.0, 4.0], replace=True)
        assert store.get('k') == EmbeddingVector.of([3.0, 4.0])

    def test_missing_key(self):
        """Test that lookups of unknown keys raise MissingEmbedding (a KeyError)."""
        store = EmbeddingStore(2)
        with pytest.raises(MissingEmbedding):
            store.get('nope')
        with pytest.raises(KeyError):
            store.matrix(['nope'])

    def test_frozen_store_rejects_writes(self):
        """Test that a frozen store cannot be modified."""
        store = EmbeddingStore(2).freeze()
        with pytest.raises(ValidationError):
            store.put('k', [1.0, 2.0])

    def test_discard_keeps_order(self):
        """Test that removing a key leaves the remaining keys and vectors in order."""
        store = EmbeddingStore(1)
        for i, key in enumerate('abcd'):
            store.put(key, [float(i)])
        store.discard('b')
        store.discard('zz')
        assert store.keys() == ['a', 'c', 'd']
        assert store.get('d') == EmbeddingVector.of([3.0])
        np.testing.assert_array_equal(store.matrix()[:, 0], [0.0, 2.0, 3.0])


class TestEmbeddingFile:
    """Test the binary embedding file format."""

    def test_round_trip_is_bit_exact_and_ordered(self, tmp_path, rng):
        """Test that save then load preserves every bit and the key order."""
        store = EmbeddingStore(8)
        keys = [f'key-{i}' for i in rng.permutation(50)]
        for key in keys:
            store.put(key, rng.standard_normal(8).astype(np.float32))
        store.put('ünïcode-key', np.full(8, -0.0, dtype=np.float32))
        path = tmp_path / 'vectors.emb'

        save_embeddings(store, path)
        loaded = load_embeddings(path)

        assert loaded.keys() == store.keys()
        assert loaded.matrix().tobytes() == store.matrix().tobytes()
        assert loaded.frozen

    def test_signed_zero_and_denormals_survive(self, tmp_path):
        """Test that -0.0 and the smallest subnormals keep their exact bit patterns."""
        tiny = np.nextafter(np.float32(0), np.float32(1))
        store = EmbeddingStore(4)
        store.put('edge', np.array([-0.0, tiny, -tiny, np.finfo(np.float32).max], dtype=np.float32))
        path = tmp_path / 'edge.emb'
        save_embeddings(store, path)
        assert load_embeddings(path).matrix().tobytes() == store.matrix().tobytes()

    @settings(max_examples=100, deadline=None)
    @given(
        st.integers(min_value=1, max_value=6).flatmap(lambda dim: arrays(
            np.float32,
            st.tuples(st.integers(min_value=0, max_value=12), st.just(dim)),
            elements=st.floats(width=32, allow_nan=False, allow_infinity=False),
        )),
        st.data(),
    )
    def test_round_trip_over_arbitrary_finite_payloads(self, tmp_path_factory, matrix, data):
        """Test that any finite float32 payload and any unicode keys load back bit for bit."""
        keys = data.draw(st.lists(
            st.text(st.characters(blacklist_categories=('Cs',)), max_size=20),
            min_size=matrix.shape[0], max_size=matrix.shape[0], unique=True,
        ))
        store = EmbeddingStore()
        for key, row in zip(keys, matrix):
            store.put(key, row)
        path = tmp_path_factory.mktemp('roundtrip') / 'vectors.emb'

        save_embeddings(store, path)
        loaded = load_embeddings(path)

        assert loaded.keys() == keys
        assert loaded.matrix().tobytes() == store.matrix().tobytes()

    def test_empty_store_round_trip(self, tmp_path):
        """Test that an empty store writes a header-only file that loads back empty."""
        path = tmp_path / 'empty.emb'
        save_embeddings(EmbeddingStore(), path)
        assert len(load_embeddings(path)) == 0

    def test_bad_magic(self, tmp_path):
        """Test that a file with the wrong magic is a FormatError."""
        path = tmp_path / 'bad.emb'
        store = EmbeddingStore(2)
        store.put('k', [1.0, 2.0])
        save_embeddings(store, path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_embeddings(path)

    @pytest.mark.parametrize('cut', [1, 4, 9, 20])
    def test_truncated_file(self, tmp_path, cut):
        """Test that a file cut short anywhere is a FormatError, never partial data."""
        path = tmp_path / 'cut.emb'
        store = EmbeddingStore(4)
        store.put('a', [1.0, 2.0, 3.0, 4.0])
        store.put('b', [5.0, 6.0, 7.0, 8.0])
        save_embeddings(store, path)
        data = path.read_bytes()
        path.write_bytes(data[:-cut])
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_trailing_bytes(self, tmp_path):
        """Test that extra bytes after the last entry are a FormatError."""
        path = tmp_path / 'extra.emb'
        store = EmbeddingStore(2)
        store.put('k', [1.0, 2.0])
        save_embeddings(store, path)
        path.write_bytes(path.read_bytes() + b'\x00')
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_header_only_garbage(self, tmp_path):
        """Test that a file holding just the magic is a FormatError."""
        path = tmp_path / 'short.emb'
        path.write_bytes(MAGIC)
        with pytest.raises(FormatError):
            load_embeddings(path)


class TestEmbeddingCache:
    """Test that the cache only embeds keys it has not seen."""

    def test_second_call_is_served_from_cache(self, tmp_path):
        """Test that cached keys are not sent to the embed function again, even after reopening."""
        calls = []

        def embed(keys):
            calls.append(list(keys))
            return [EmbeddingVector.of([float(len(k)), 1.0]) for k in keys]

        path = tmp_path / 'cache.emb'
        cache = EmbeddingCache(path)
        cache.get_or_embed(['a', 'bb', 'a'], embed)
        cache.flush()

        reopened = EmbeddingCache(path)
        vectors = reopened.get_or_embed(['bb', 'ccc'], embed)

        assert calls == [['a', 'bb'], ['ccc']]
        assert vectors[0] == EmbeddingVector.of([2.0, 1.0])

    def test_excluded_keys_are_not_stored(self):
        """Test that keys the embed function returns None for stay uncached."""
        cache = EmbeddingCache()
        result = cache.get_or_embed(['x', 'y'], lambda keys: [None, EmbeddingVector.of([1.0])])
        assert result[0] is None
        assert 'x' not in cache.store
        assert 'y' in cache.store

    def test_changed_fingerprint_is_embedded_again(self, tmp_path):
        """Test that a key whose content digest changed is re-embedded, also after reopening."""
        calls = []

        def embed_with(value):
            def embed(keys):
                calls.append(list(keys))
                return [EmbeddingVector.of([value, 1.0]) for _ in keys]
            return embed

        path = tmp_path / 'cache.emb'
        cache = EmbeddingCache(path)
        cache.get_or_embed(['a', 'b'], embed_with(1.0), {'a': 'v1', 'b': 'v1'})
        cache.flush()
        assert cache.fingerprint_path.exists()

        reopened = EmbeddingCache(path)
        vectors = reopened.get_or_embed(['a', 'b'], embed_with(2.0), {'a': 'v1', 'b': 'v2'})

        assert calls == [['a', 'b'], ['b']]
        assert vectors[0] == EmbeddingVector.of([1.0, 1.0])
        assert vectors[1] == EmbeddingVector.of([2.0, 1.0])
        assert reopened.store.keys() == ['a', 'b']

    def test_cache_without_recorded_fingerprints_is_refreshed(self, tmp_path):
        """Test that vectors cached before fingerprints were recorded are embedded again."""
        path = tmp_path / 'cache.emb'
        cache = EmbeddingCache(path)
        cache.get_or_embed(['a'], lambda keys: [EmbeddingVector.of([1.0])])
        cache.flush()

        calls = []
        reopened = EmbeddingCache(path)
        reopened.get_or_embed(['a'], lambda keys: calls.append(keys) or [EmbeddingVector.of([2.0])], {'a': 'v1'})
        assert calls == [['a']]

    def test_stale_key_now_excluded_is_dropped(self):
        """Test that a re-embedded key the source no longer covers leaves the store."""
        cache = EmbeddingCache()
        cache.get_or_embed(['a', 'b'], lambda keys: [EmbeddingVector.of([1.0])] * len(keys), {'a': '1', 'b': '1'})
        result = cache.get_or_embed(['a', 'b'], lambda keys: [None], {'a': '1', 'b': '2'})
        assert result[1] is None
        assert 'b' not in cache.store
        assert 'b' not in cache.fingerprints

    def test_wrong_vector_count_is_a_protocol_error(self):
        """Test that an embed function returning too few vectors raises ProtocolError."""
        cache = EmbeddingCache()
        with pytest.raises(ProtocolError):
            cache.get_or_embed(['a', 'b'], lambda keys: [EmbeddingVector.of([1.0])])

    @pytest.mark.slow
    def test_five_thousand_images_are_embedded_once(self, tmp_path):
        """Test that 5,000 distinct keys cost 5,000 embeddings, and a rerun costs none."""
        keys = [f'img{i:05d}' for i in range(5000)]
        embedded = []

        def embed(batch):
            embedded.extend(batch)
            return [EmbeddingVector.of([float(int(k[3:])), 1.0]) for k in batch]

        path = tmp_path / 'images.emb'
        cache = EmbeddingCache(path)
        cache.get_or_embed(keys + keys[:100], embed, {k: 'v1' for k in keys})
        cache.flush()
        assert len(embedded) == 5000
        assert len(set(embedded)) == 5000

        vectors = EmbeddingCache(path).get_or_embed(keys, embed, {k: 'v1' for k in keys})
        assert len(embedded) == 5000
        assert vectors[4999] == EmbeddingVector.of([4999.0, 1.0])


class TestContrastSet:
    """Test contrast-set assembly."""

    def test_rows_are_normalized_in_id_order(self, five_image_fixture):
        """Test that the default contrast set covers every image, sorted, with unit rows."""
        contrast = five_image_fixture['contrast']
        assert contrast.image_ids == ('img_a', 'img_b', 'img_c', 'img_d', 'img_e')
        np.testing.assert_allclose(np.linalg.norm(contrast.matrix, axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(contrast.matrix[4], [-0.5] * 4, atol=1e-7)

    def test_unknown_image_id(self, five_image_fixture):
        """Test that asking for an image outside the dataset raises DanglingTarget."""
        with pytest.raises(DanglingTarget):
            build_contrast_set(five_image_fixture['dataset'], five_image_fixture['image_store'], ['img_z'])
        with pytest.raises(DanglingTarget):
            five_image_fixture['contrast'].position('img_z')

    def test_requires_two_images(self):
        """Test that a single-image contrast set is rejected."""
        with pytest.raises(ValidationError):
            ContrastSet(('only',), np.array([[1.0, 0.0]], dtype=np.float32))

    def test_rejects_unnormalized_rows(self):
        """Test that raw (unnormalized) rows are rejected."""
        with pytest.raises(ValidationError):
            ContrastSet(('a', 'b'), np.array([[2.0, 0.0], [0.0, 1.0]], dtype=np.float32))

    def test_matrix_is_read_only(self, five_image_fixture):
        """Test that the shared contrast matrix cannot be modified."""
        with pytest.raises(ValueError):
            five_image_fixture['contrast'].matrix[0, 0] = 0.0
