"""
End-to-end tests of the specrank command line on a small synthetic corpus.
"""

import json

import pytest
import responses

from specrank.cli import main
from specrank.embeddings import (
    Dataset, DescriptionRecord, EmbeddingStore, ImageRecord, read_manifest, save_embeddings,
    write_manifest
)
from specrank.errors import EXIT_BACKEND, EXIT_VALIDATION
from specrank.ranking import read_rank_records
from specrank.reporting import read_table
from specrank.synthetic import build_synthetic_corpus

GEN_ENDPOINT = 'http://generate.test/v1/generate'

pytestmark = pytest.mark.integration


@pytest.fixture
def fixture_dir(tmp_path):
    """Manifest plus precomputed embeddings for 60 images x 3 conditions."""
    corpus = build_synthetic_corpus(n_images=60, dim=32, seed=1)
    root = tmp_path / 'fixture'
    root.mkdir()
    write_manifest(corpus.dataset, root / 'manifest.jsonl')
    save_embeddings(corpus.image_store, root / 'image_embeddings.emb')
    save_embeddings(corpus.text_store, root / 'text_embeddings.emb')
    return root


@pytest.fixture
def exact_texts(tmp_path):
    """Description embeddings equal to their target image's embedding, so every rank is 1."""
    corpus = build_synthetic_corpus(n_images=60, dim=32, seed=1)
    store = EmbeddingStore(32)
    for desc in corpus.dataset.sorted_descriptions():
        store.put(desc.desc_id, corpus.image_store.get(desc.target_image_id))
    path = tmp_path / 'exact.emb'
    save_embeddings(store, path)
    return path


def _run(out_dir, *args):
    return main(['--out-dir', str(out_dir), '--quiet', *args])


def _pipeline(fixture_dir, out_dir, threads='1'):
    assert _run(out_dir, '--threads', threads, 'ingest', '--manifest', str(fixture_dir / 'manifest.jsonl')) == 0
    assert _run(out_dir, 'embed',
                '--image-embeddings', str(fixture_dir / 'image_embeddings.emb'),
                '--text-embeddings', str(fixture_dir / 'text_embeddings.emb')) == 0
    assert _run(out_dir, '--threads', threads, 'rank', '--block-rows', '16') == 0


class TestPipeline:
    """Test the ingest, embed, rank, analyze and report chain."""

    def test_full_run(self, fixture_dir, tmp_path):
        """Test that every stage succeeds and writes its artifacts."""
        out = tmp_path / 'out'
        _pipeline(fixture_dir, out)
        assert _run(out, 'analyze', '--min-bin-count', '1', '--n-resamples', '50') == 0
        assert _run(out, 'report') == 0

        for name in ('dataset.jsonl', 'ranks.jsonl', 'excluded.jsonl', 'rank_cdf.csv', 'rank_summary.csv',
                     'condition_model.csv', 'delta_r2.csv', 'length_model.csv', 'length_slopes.csv',
                     'mean_rank_by_length.csv'):
            assert (out / name).exists(), name
        assert len(read_rank_records(out / 'ranks.jsonl')) == 180

        delta, provenance = read_table(out / 'delta_r2.csv')
        assert delta['condition'].iloc[0] == 'all'
        assert set(provenance) == {'config_sha256', 'rank_seed', 'stats_seed', 'generation_seed'}

    def test_composite_cdf_dominates(self, fixture_dir, tmp_path):
        """Test that composite descriptions reach rank 1 more often than originals."""
        out = tmp_path / 'out'
        _pipeline(fixture_dir, out)
        summary, _ = read_table(out / 'rank_summary.csv')
        summary = summary.set_index('condition')
        assert summary.loc['composite', 'recall_at_1'] > summary.loc['original', 'recall_at_1']
        assert summary.loc['composite', 'mean_rank'] < summary.loc['original', 'mean_rank']

        cdf, _ = read_table(out / 'rank_cdf.csv')
        assert list(cdf.columns) == ['condition', 'rank', 'cumulative_share']
        assert cdf.groupby('condition')['cumulative_share'].max().tolist() == [1.0, 1.0, 1.0]

    def test_thread_count_does_not_change_outputs(self, fixture_dir, tmp_path):
        """Test that rank outputs are byte-identical for one and four threads."""
        _pipeline(fixture_dir, tmp_path / 'one', threads='1')
        _pipeline(fixture_dir, tmp_path / 'four', threads='4')
        for name in ('ranks.jsonl', 'rank_cdf.csv', 'rank_summary.csv'):
            assert (tmp_path / 'one' / name).read_bytes() == (tmp_path / 'four' / name).read_bytes()

    def test_condition_filter(self, fixture_dir, tmp_path):
        """Test that --conditions keeps only the named conditions at ingest."""
        out = tmp_path / 'out'
        assert _run(out, '--conditions', 'composite,original', 'ingest',
                    '--manifest', str(fixture_dir / 'manifest.jsonl')) == 0
        assert read_manifest(out / 'dataset.jsonl').conditions() == ['composite', 'original']

    def test_embed_records_missing_vectors(self, fixture_dir, tmp_path):
        """Test that descriptions without a precomputed vector are excluded and listed after ranking."""
        out = tmp_path / 'out'
        partial_texts = tmp_path / 'texts.emb'
        corpus = build_synthetic_corpus(n_images=60, dim=32, seed=1)
        partial = EmbeddingStore(32)
        for key in corpus.text_store.keys():
            if not key.endswith(':verbose'):
                partial.put(key, corpus.text_store.get(key))
        save_embeddings(partial, partial_texts)

        assert _run(out, 'ingest', '--manifest', str(fixture_dir / 'manifest.jsonl')) == 0
        assert _run(out, 'embed', '--image-embeddings', str(fixture_dir / 'image_embeddings.emb'),
                    '--text-embeddings', str(partial_texts)) == 0
        assert _run(out, 'rank') == 0

        excluded = [json.loads(line) for line in (out / 'excluded.jsonl').read_text().splitlines()[1:]]
        assert len(excluded) == 60
        assert {e['exclusion_reason'] for e in excluded} == {'missing_embedding'}
        assert len(read_rank_records(out / 'ranks.jsonl')) == 120


    def test_explicit_text_embeddings_override_out_dir(self, fixture_dir, exact_texts, tmp_path):
        """Test that rank --text-embeddings wins over the text embeddings embed left in out_dir."""
        out = tmp_path / 'out'
        _pipeline(fixture_dir, out)
        assert _run(out, 'rank', '--text-embeddings', str(exact_texts)) == 0

        ranks = [r.target_rank for r in read_rank_records(out / 'ranks.jsonl')]
        assert len(ranks) == 180
        assert set(ranks) == {1.0}

    def test_reembedding_from_a_new_source_replaces_cached_vectors(self, fixture_dir, exact_texts, tmp_path):
        """Test that embed picks up changed source vectors instead of serving stale cache entries."""
        out = tmp_path / 'out'
        _pipeline(fixture_dir, out)
        first = (out / 'text_embeddings.emb').read_bytes()

        assert _run(out, 'embed', '--image-embeddings', str(fixture_dir / 'image_embeddings.emb'),
                    '--text-embeddings', str(exact_texts)) == 0
        assert (out / 'text_embeddings.emb').read_bytes() != first
        assert _run(out, 'rank') == 0

        assert {r.target_rank for r in read_rank_records(out / 'ranks.jsonl')} == {1.0}

    def test_reembedding_unchanged_source_keeps_file(self, fixture_dir, tmp_path):
        """Test that a second embed over the same source rewrites identical embedding files."""
        out = tmp_path / 'out'
        _pipeline(fixture_dir, out)
        before = {name: (out / name).read_bytes() for name in ('image_embeddings.emb', 'text_embeddings.emb')}

        assert _run(out, 'embed', '--image-embeddings', str(fixture_dir / 'image_embeddings.emb'),
                    '--text-embeddings', str(fixture_dir / 'text_embeddings.emb')) == 0
        for name, data in before.items():
            assert (out / name).read_bytes() == data, name

class TestExitCodes:
    """Test error handling at the command line."""

    def test_analyze_without_ranks(self, tmp_path):
        """Test that analyze before rank exits with a validation error."""
        assert _run(tmp_path / 'out', 'analyze') == EXIT_VALIDATION

    def test_report_without_tables(self, tmp_path):
        """Test that report before rank exits with a validation error."""
        assert _run(tmp_path / 'out', 'report') == EXIT_VALIDATION

    def test_ingest_without_manifest(self, tmp_path):
        """Test that ingest needs a manifest."""
        assert _run(tmp_path / 'out', 'ingest') == EXIT_VALIDATION

    def test_bad_manifest_line(self, tmp_path):
        """Test that a malformed manifest exits 1."""
        manifest = tmp_path / 'm.jsonl'
        manifest.write_text('{"kind": "image", "image_id": "i1"}\n{oops\n', encoding='utf-8')
        assert _run(tmp_path / 'out', 'ingest', '--manifest', str(manifest)) == EXIT_VALIDATION

    def test_usage_error(self, tmp_path):
        """Test that an unknown flag exits 1 rather than argparse's 2."""
        with pytest.raises(SystemExit) as exc:
            main(['rank', '--no-such-flag'])
        assert exc.value.code == EXIT_VALIDATION

    def test_generate_needs_conditions(self, tmp_path):
        """Test that generate without conditions is a validation error."""
        assert _run(tmp_path / 'out', 'generate', '--endpoint', GEN_ENDPOINT) == EXIT_VALIDATION


    def test_endpoint_without_scheme_exits_2(self, tmp_path):
        """Test that an embedding endpoint without a URL scheme is reported as a backend failure."""
        images = []
        for i in range(2):
            path = tmp_path / f'img{i}.png'
            path.write_bytes(b'\x89PNG' + bytes([i]))
            images.append(ImageRecord(f'img{i}', source_uri=str(path)))
        dataset = Dataset(images, [DescriptionRecord.create('img0:original', 'img0', 'original', 'a cat')])
        write_manifest(dataset, tmp_path / 'm.jsonl')
        out = tmp_path / 'out'
        assert _run(out, 'ingest', '--manifest', str(tmp_path / 'm.jsonl')) == 0
        assert _run(out, 'embed', '--backend', 'remote_service', '--endpoint', 'embed.local/v1') == EXIT_BACKEND

    def test_generation_endpoint_without_scheme_exits_2(self, tmp_path):
        """Test that a malformed generation endpoint fails its jobs with exit code 2."""
        dataset = Dataset([ImageRecord('img0', reference_captions=('a', 'b', 'c', 'd', 'e'))])
        write_manifest(dataset, tmp_path / 'm.jsonl')
        out = tmp_path / 'out'
        assert _run(out, 'ingest', '--manifest', str(tmp_path / 'm.jsonl')) == 0
        assert _run(out, '--conditions', 'composite', 'generate', '--endpoint', 'generate.local/v1') == EXIT_BACKEND


class TestGenerateCommand:
    """Test the generate command against a mocked generation service."""

    @pytest.fixture
    def manifest(self, tmp_path):
        captions = ('a cat', 'a grey cat', 'cat on a sofa', 'a sleeping cat', 'cat indoors')
        dataset = Dataset([ImageRecord(f'img{i}', reference_captions=captions) for i in range(2)])
        path = tmp_path / 'manifest.jsonl'
        write_manifest(dataset, path)
        return path

    @responses.activate
    def test_generates_descriptions(self, manifest, tmp_path):
        """Test that generated descriptions are added to the working dataset."""
        responses.add(responses.POST, GEN_ENDPOINT, json={'text': 'A grey cat sleeping on a sofa indoors.'})
        out = tmp_path / 'out'
        assert _run(out, 'ingest', '--manifest', str(manifest)) == 0
        assert _run(out, '--conditions', 'composite', 'generate', '--endpoint', GEN_ENDPOINT, '--model', 'm1') == 0

        dataset = read_manifest(out / 'dataset.jsonl')
        assert sorted(dataset.descriptions) == ['img0:composite', 'img1:composite']
        assert dataset.descriptions['img0:composite'].model_tag == 'm1'
        assert (out / 'jobs.jsonl').read_text(encoding='utf-8').startswith('{"provenance"')

    @responses.activate
    def test_model_change_regenerates(self, manifest, tmp_path):
        """Test that rerunning generate with another model replaces the earlier model's descriptions."""
        responses.add(responses.POST, GEN_ENDPOINT, json={'text': 'A grey cat sleeping on a sofa indoors.'})
        out = tmp_path / 'out'
        assert _run(out, 'ingest', '--manifest', str(manifest)) == 0
        assert _run(out, '--conditions', 'composite', 'generate', '--endpoint', GEN_ENDPOINT, '--model', 'm1') == 0
        assert len(responses.calls) == 2

        assert _run(out, '--conditions', 'composite', 'generate', '--endpoint', GEN_ENDPOINT, '--model', 'm1') == 0
        assert len(responses.calls) == 2

        assert _run(out, '--conditions', 'composite', 'generate', '--endpoint', GEN_ENDPOINT, '--model', 'm2') == 0
        assert len(responses.calls) == 4
        dataset = read_manifest(out / 'dataset.jsonl')
        assert sorted(dataset.descriptions) == ['img0:composite', 'img1:composite']
        assert {d.model_tag for d in dataset.descriptions.values()} == {'m2'}

    @responses.activate
    def test_rejected_requests_exit_2(self, manifest, tmp_path):
        """Test that jobs failing on the service side give exit code 2."""
        responses.add(responses.POST, GEN_ENDPOINT, status=400)
        out = tmp_path / 'out'
        assert _run(out, 'ingest', '--manifest', str(manifest)) == 0
        assert _run(out, '--conditions', 'composite', 'generate', '--endpoint', GEN_ENDPOINT) == EXIT_BACKEND
        assert (out / 'jobs.jsonl').exists()

    @responses.activate
    def test_empty_output_exits_1(self, manifest, tmp_path):
        """Test that blank model output gives exit code 1."""
        responses.add(responses.POST, GEN_ENDPOINT, json={'text': '  '})
        out = tmp_path / 'out'
        assert _run(out, 'ingest', '--manifest', str(manifest)) == 0
        assert _run(out, '--conditions', 'composite', 'generate', '--endpoint', GEN_ENDPOINT) == EXIT_VALIDATION


class TestFiveImageFixture:
    """Test the rank command against hand-computed ranks."""

    def test_rank_file_matches_oracle(self, five_image_fixture, tmp_path):
        """Test that rank writes one record per description with the expected mid-ranks."""
        write_manifest(five_image_fixture['dataset'], tmp_path / 'manifest.jsonl')
        save_embeddings(five_image_fixture['image_store'], tmp_path / 'images.emb')
        save_embeddings(five_image_fixture['text_store'], tmp_path / 'texts.emb')
        out = tmp_path / 'out'

        assert _run(out, 'ingest', '--manifest', str(tmp_path / 'manifest.jsonl')) == 0
        assert _run(out, 'rank', '--image-embeddings', str(tmp_path / 'images.emb'),
                    '--text-embeddings', str(tmp_path / 'texts.emb')) == 0

        ranks = {r.desc_id: r.target_rank for r in read_rank_records(out / 'ranks.jsonl')}
        assert ranks == five_image_fixture['expected_ranks']


class TestReportCommand:
    """Test chart export from the CSV tables."""

    def test_failed_export_keeps_exit_zero(self, fixture_dir, tmp_path, mocker, caplog):
        """Test that a failing static export logs a warning and the command still succeeds."""
        out = tmp_path / 'out'
        _pipeline(fixture_dir, out)
        mocker.patch('plotly.graph_objects.Figure.to_image', side_effect=RuntimeError('no engine'))

        assert _run(out, 'report') == 0
        assert not (out / 'rank_cdf.svg').exists()
        assert 'Could not export rank_cdf.svg' in caplog.text

    def test_svg_carries_provenance(self, fixture_dir, tmp_path, mocker):
        """Test that exported SVGs start with the provenance comment of their table."""
        out = tmp_path / 'out'
        _pipeline(fixture_dir, out)
        mocker.patch('plotly.graph_objects.Figure.to_image', return_value=b'<svg></svg>')

        assert _run(out, 'report') == 0
        first_line = (out / 'rank_cdf.svg').read_text(encoding='utf-8').splitlines()[0]
        assert first_line.startswith('<!-- config_sha256=')
        assert 'rank_seed=0' in first_line
