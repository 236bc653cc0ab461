"""
Tests for score matrices, target ranks and rank summaries.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from tests.conftest import brute_force_rank, unit_rows

from specrank.embeddings import ContrastSet, Dataset, DescriptionRecord, EmbeddingStore, ImageRecord, build_contrast_set
from specrank.errors import DanglingTarget, DimMismatch, EmptyInput, MissingArtifact, MissingEmbedding, ValidationError
from specrank.ranking import (
    ExcludedRecord, RankResult, condition_cdfs, rank_all, rank_cdf, read_excluded_records, read_rank_records,
    recall_at_k, score_matrix, stream_score_blocks, summarize_ranks, target_rank, write_excluded_records,
    write_rank_records
)
from specrank.scoring import ScorerConfig, clip_score


class TestScoreMatrix:
    """Test dense scoring of descriptions against a contrast set."""

    def test_hand_computed_scores(self):
        """Test that a 2 x 2 instance gives w * max(cos, 0) for each pair."""
        contrast = ContrastSet(('a', 'b'), np.array([[1.0, 0.0], [0.6, 0.8]]))
        result = score_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]), contrast, ScorerConfig())
        np.testing.assert_allclose(result.values, [[2.5, 1.5], [0.0, 2.0]], atol=1e-6)
        assert result.col_ids == ('a', 'b')

    def test_matches_scalar_path(self, rng):
        """Test that the blocked matrix product agrees with per-pair clip_score."""
        texts = unit_rows(rng, 50, 12)
        images = unit_rows(rng, 200, 12)
        contrast = ContrastSet(tuple(f'i{j}' for j in range(200)), images)
        values = score_matrix(texts, contrast, block_rows=16).values
        for i in range(0, 50, 7):
            for j in range(0, 200, 13):
                assert values[i, j] == pytest.approx(clip_score(texts[i], images[j]), abs=1e-5)

    def test_dim_mismatch(self, five_image_fixture):
        """Test that text rows of the wrong dimension are rejected."""
        with pytest.raises(DimMismatch):
            score_matrix(np.ones((1, 3)) / np.sqrt(3), five_image_fixture['contrast'])

    def test_unnormalized_rows(self, five_image_fixture):
        """Test that raw text rows are refused."""
        with pytest.raises(ValidationError):
            score_matrix(np.full((1, 4), 2.0), five_image_fixture['contrast'])

    def test_stream_covers_all_rows_in_order(self, rng):
        """Test that streamed blocks arrive in row order and cover every row once."""
        contrast = ContrastSet(('a', 'b', 'c'), unit_rows(rng, 3, 5))
        offsets = [start for start, _ in stream_score_blocks(unit_rows(rng, 23, 5), contrast, ScorerConfig(),
                                                             block_rows=4, workers=3)]
        assert offsets == list(range(0, 23, 4))


class TestTargetRank:
    """Test the mid-rank rule."""

    def test_target_is_maximum(self):
        """Test that the highest-scoring target ranks first."""
        assert target_rank([0.9, 0.8, 0.7], 0) == (1.0, 0, 0)

    def test_tie_counts_half(self):
        """Test that each tie adds one half to the rank."""
        assert target_rank([0.9, 0.5, 0.5, 0.1], 1) == (2.5, 1, 1)

    def test_all_equal(self):
        """Test that a row of identical scores puts the target in the middle."""
        rank, greater, tied = target_rank([1.0] * 5, 3)
        assert (rank, greater, tied) == (3.0, 0, 4)

    def test_index_out_of_range(self):
        """Test that a bad target index raises IndexError."""
        with pytest.raises(IndexError):
            target_rank([0.1, 0.2], 2)
        with pytest.raises(IndexError):
            target_rank([0.1, 0.2], -1)

    def test_matches_sort_oracle(self, rng):
        """Test that ranks on random rows with rounding-induced ties match a full sort."""
        for _ in range(20):
            row = np.round(rng.random(1000), 2)
            target = int(rng.integers(1000))
            assert target_rank(row, target)[0] == brute_force_rank(list(row), target)

    @pytest.mark.property
    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.integers(min_value=0, max_value=6), min_size=2, max_size=40).flatmap(lambda row: st.tuples(
            st.just(row),
            st.integers(min_value=0, max_value=len(row) - 1),
            st.permutations(range(len(row))),
        ))
    )
    def test_column_order_does_not_matter(self, case):
        """Test that permuting the contrast columns leaves the target's rank unchanged."""
        row, target, order = case
        scores = np.array(row, dtype=np.float32) / 4
        permuted = scores[list(order)]
        assert target_rank(permuted, list(order).index(target)) == target_rank(scores, target)


class TestRankAll:
    """Test ranking of whole datasets."""

    def test_five_image_fixture(self, five_image_fixture):
        """Test the hand-derived ranks for the five-image fixture."""
        results = rank_all(
            five_image_fixture['dataset'], five_image_fixture['contrast'], ScorerConfig(),
            five_image_fixture['text_store'],
        )
        ranks = {r.desc_id: r.target_rank for r in results}
        assert ranks == five_image_fixture['expected_ranks']
        by_id = {r.desc_id: r for r in results}
        assert by_id['d_between'].n_tied == 1
        assert by_id['d_far'].n_strictly_greater == 2
        assert all(r.n_contrast == 5 for r in results)

    def test_composes_with_target_rank(self, random_instance):
        """Test that rank_all equals target_rank applied to each score_matrix row."""
        dataset = random_instance['dataset']
        contrast = random_instance['contrast']
        results = rank_all(dataset, contrast, ScorerConfig(), random_instance['text_store'], block_rows=8)

        descriptions = dataset.active_descriptions()
        raw = random_instance['text_store'].matrix([d.desc_id for d in descriptions]).astype(np.float64)
        texts = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        values = score_matrix(texts, contrast, ScorerConfig(weight_w=1.0), block_rows=8).values
        for row, desc, result in zip(values, descriptions, results):
            assert result.desc_id == desc.desc_id
            assert result.target_rank == target_rank(row, contrast.position(desc.target_image_id))[0]

    def test_self_match_ranks_first(self, rng):
        """Test that a description embedded exactly at its image ranks 1."""
        vectors = unit_rows(rng, 30, 8)
        images = [ImageRecord(f'i{j}') for j in range(30)]
        image_store = EmbeddingStore(8)
        text_store = EmbeddingStore(8)
        for j, vector in enumerate(vectors):
            image_store.put(f'i{j}', vector)
            text_store.put(f'd{j}', vector)
        dataset = Dataset(images, [DescriptionRecord.create(f'd{j}', f'i{j}', 'original', 'x') for j in range(30)])
        results = rank_all(dataset, build_contrast_set(dataset, image_store), None, text_store)
        assert {r.target_rank for r in results} == {1.0}

    def test_worker_count_does_not_change_results(self, random_instance):
        """Test that results are identical for one and several workers at a fixed block size."""
        args = (random_instance['dataset'], random_instance['contrast'], ScorerConfig(), random_instance['text_store'])
        assert rank_all(*args, block_rows=5, workers=1) == rank_all(*args, block_rows=5, workers=4)

    def test_rank_ignores_weight_when_target_positive(self, random_instance):
        """Test that rescaling and unclamping leave ranks of positive targets unchanged."""
        args = (random_instance['dataset'], random_instance['contrast'])
        default = rank_all(*args, ScorerConfig(), random_instance['text_store'])
        rescaled = rank_all(*args, ScorerConfig(weight_w=1.0, clamp_at_zero=False), random_instance['text_store'])
        for a, b in zip(default, rescaled):
            if a.target_score > 0:
                assert a.target_rank == b.target_rank

    def test_contrast_order_does_not_change_ranks(self, five_image_fixture, rng):
        """Test that a shuffled contrast set gives the same ranks as the sorted one."""
        contrast = five_image_fixture['contrast']
        order = rng.permutation(contrast.size)
        shuffled = ContrastSet(tuple(contrast.image_ids[j] for j in order), contrast.matrix[order])
        results = rank_all(five_image_fixture['dataset'], shuffled, None, five_image_fixture['text_store'])
        assert {r.desc_id: r.target_rank for r in results} == five_image_fixture['expected_ranks']

    @pytest.mark.parametrize('w', [0.5, 1.0, 2.5, 10.0])
    def test_adjacent_cosines_stay_ordered_under_any_weight(self, w):
        """Test that a cosine one float32 step above the target's counts as greater for every w."""
        above = np.nextafter(np.float32(0.45), np.float32(1.0))
        target = np.float32(0.45)
        rows = [[float(c), float(np.sqrt(1.0 - float(c) ** 2))] for c in (above, target, above)]
        dataset = Dataset(
            [ImageRecord('a'), ImageRecord('b'), ImageRecord('c')],
            [DescriptionRecord.create('d', 'b', 'original', 'x')],
        )
        contrast = ContrastSet(('a', 'b', 'c'), np.array(rows))
        text_store = EmbeddingStore(2)
        text_store.put('d', [1.0, 0.0])
        cfg = ScorerConfig(weight_w=w)

        full = rank_all(dataset, contrast, cfg, text_store)[0]
        assert (full.target_rank, full.n_strictly_greater, full.n_tied) == (3.0, 2, 0)
        assert full.target_score == pytest.approx(w * 0.45, rel=1e-6)

        sampled = rank_all(dataset, contrast, cfg, text_store, subsample=2, seed=5)[0]
        assert (sampled.target_rank, sampled.n_strictly_greater) == (2.0, 1)

    def test_excluded_descriptions_are_skipped(self, five_image_fixture):
        """Test that excluded descriptions need no embedding and produce no result."""
        dataset = five_image_fixture['dataset'].with_exclusions({'d_far': 'token_overflow'})
        text_store = EmbeddingStore(4)
        text_store.put('d_exact', [1.0, 0.0, 0.0, 0.0])
        text_store.put('d_between', [1.0, 1.0, 0.0, 0.0])
        results = rank_all(dataset, five_image_fixture['contrast'], None, text_store)
        assert [r.desc_id for r in results] == ['d_between', 'd_exact']

    def test_missing_text_embedding(self, five_image_fixture):
        """Test that an active description without a vector raises MissingEmbedding."""
        with pytest.raises(MissingEmbedding):
            rank_all(five_image_fixture['dataset'], five_image_fixture['contrast'], None, EmbeddingStore(4))

    def test_target_outside_contrast(self, five_image_fixture):
        """Test that a target missing from the contrast set raises DanglingTarget."""
        dataset = five_image_fixture['dataset']
        contrast = build_contrast_set(dataset, five_image_fixture['image_store'], ['img_b', 'img_c', 'img_d'])
        with pytest.raises(DanglingTarget):
            rank_all(dataset, contrast, None, five_image_fixture['text_store'])

    def test_subsample_is_seeded_and_bounded(self, random_instance):
        """Test that subsampled ranks stay within the subsample and repeat under a seed."""
        args = (random_instance['dataset'], random_instance['contrast'], None, random_instance['text_store'])
        first = rank_all(*args, subsample=10, seed=3)
        again = rank_all(*args, subsample=10, seed=3)
        assert first == again
        assert all(r.n_contrast == 10 and 1.0 <= r.target_rank <= 10.0 for r in first)

    def test_subsample_larger_than_contrast_is_full(self, random_instance):
        """Test that a subsample covering the whole contrast set ranks against everything."""
        args = (random_instance['dataset'], random_instance['contrast'], None, random_instance['text_store'])
        assert rank_all(*args, subsample=1000) == rank_all(*args)

    def test_subsample_too_small(self, random_instance):
        """Test that a subsample below two images is rejected."""
        args = (random_instance['dataset'], random_instance['contrast'], None, random_instance['text_store'])
        with pytest.raises(ValidationError):
            rank_all(*args, subsample=1)


class TestSummaries:
    """Test rank CDFs, recall and per-condition summaries."""

    def test_rank_cdf_counts(self):
        """Test the CDF of a small rank list."""
        assert rank_cdf([1, 1, 2]) == [(1.0, pytest.approx(2 / 3)), (2.0, 1.0)]
        assert rank_cdf([4.5] * 3) == [(4.5, 1.0)]

    def test_rank_cdf_matches_counting(self, rng):
        """Test that every CDF point is the share of ranks at or below it."""
        ranks = rng.integers(1, 40, size=200) / 2.0
        for value, share in rank_cdf(ranks):
            assert share == pytest.approx(np.mean(ranks <= value))
        assert rank_cdf(ranks)[-1][1] == 1.0

    def test_empty_inputs(self):
        """Test that empty rank lists raise EmptyInput."""
        with pytest.raises(EmptyInput):
            rank_cdf([])
        with pytest.raises(EmptyInput):
            recall_at_k([], 1)
        with pytest.raises(EmptyInput):
            summarize_ranks([])

    def test_recall_at_k(self):
        """Test that recall counts ranks at or below k."""
        assert recall_at_k([1.0, 1.5, 3.0, 10.0], 1) == 0.25
        assert recall_at_k([1.0, 1.5, 3.0, 10.0], 3) == 0.75

    def test_summary_per_condition(self, five_image_fixture):
        """Test that the summary has one row per condition with its statistics."""
        results = rank_all(
            five_image_fixture['dataset'], five_image_fixture['contrast'], None, five_image_fixture['text_store']
        )
        summary = summarize_ranks(results).set_index('condition')
        assert list(summary.index) == ['composite', 'original', 'verbose']
        assert summary.loc['verbose', 'mean_rank'] == 1.5
        assert summary.loc['original', 'recall_at_1'] == 1.0
        assert set(condition_cdfs(results)) == {'composite', 'original', 'verbose'}


class TestRankRecords:
    """Test the line-delimited rank and exclusion files."""

    def test_round_trip_with_provenance(self, tmp_path):
        """Test that rank records read back unchanged and the header line is skipped."""
        results = [RankResult('d1', 'original', 1.5, 2.25, 5, 0, 1, 12)]
        path = tmp_path / 'ranks.jsonl'
        write_rank_records(results, path, provenance={'seed': 0})
        assert path.read_text(encoding='utf-8').startswith('{"provenance"')
        assert read_rank_records(path) == results

    def test_excluded_round_trip(self, tmp_path):
        """Test that exclusion records read back unchanged."""
        records = [ExcludedRecord('d9', 'verbose', 'token_overflow')]
        write_excluded_records(records, tmp_path / 'excluded.jsonl')
        assert read_excluded_records(tmp_path / 'excluded.jsonl') == records

    def test_missing_rank_file(self, tmp_path):
        """Test that an absent rank file raises MissingArtifact."""
        with pytest.raises(MissingArtifact):
            read_rank_records(tmp_path / 'ranks.jsonl')
