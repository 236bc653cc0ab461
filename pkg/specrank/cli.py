"""
specrank command line

    specrank [--config FILE] [--seed N] [--out-dir DIR] [--threads N] [--conditions LIST] [--quiet] COMMAND

Commands share artifacts through the output directory:

    ingest    manifest                    -> dataset.jsonl
    generate  dataset.jsonl               -> jobs.jsonl, dataset.jsonl (+ generated descriptions)
    embed     dataset.jsonl               -> image_embeddings.emb, text_embeddings.emb, dataset.jsonl (+ exclusions)
    rank      dataset.jsonl, embeddings   -> ranks.jsonl, excluded.jsonl, rank_cdf.csv, rank_summary.csv
    analyze   ranks.jsonl (+ trials)      -> condition_model.csv, delta_r2.csv, length_model.csv,
                                             length_slopes.csv, mean_rank_by_length.csv,
                                             preference_model.csv, preference_proportions.csv,
                                             choice_agreement.csv
    report    CSV tables                  -> rank_cdf.svg, mean_rank_by_length.svg, preferences.svg

Exit codes: 0 success, 1 validation error, 2 backend failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from specrank.config import Config, RunConfig, load_run_config
from specrank.embeddings import (
    MISSING_EMBEDDING, Dataset, EmbeddingCache, build_contrast_set, load_embeddings, read_manifest,
    write_manifest
)
from specrank.errors import (
    BackendUnavailable, DegenerateInput, EmptyGeneration, EmptyInput, MissingArtifact,
    SeparationDetected, SingularDesign, SpecRankError, ValidationError
)
from specrank.generation import JobLedger, generate_variants, get_generation_client
from specrank.ranking import (
    ExcludedRecord, condition_cdfs, rank_all, read_rank_records, summarize_ranks,
    write_excluded_records, write_rank_records
)
from specrank.reporting import (
    cdf_frame, mean_rank_by_length_figure, preference_figure, rank_cdf_figure, read_table,
    write_svg, write_table
)
from specrank.scoring.backends import get_embedding_backend
from specrank.scoring.scorer import PRECOMPUTED
from specrank.stats import (
    binned_frame, choice_agreement_table, condition_model_table, fit_choice_model,
    fit_condition_model, fit_length_by_condition, fit_length_slopes, fit_preference_model,
    fit_specificity_rate_model, fit_table, fit_tables, length_binned_means,
    pairwise_condition_effects, preference_proportions, read_trials
)
from specrank.stats.preference import PREFERENCE, SPECIFICITY

logger = logging.getLogger(__name__)

# ========== Artifact Names ==========

DATASET = 'dataset.jsonl'
IMAGE_EMBEDDINGS = 'image_embeddings.emb'
TEXT_EMBEDDINGS = 'text_embeddings.emb'
JOBS = 'jobs.jsonl'
RANKS = 'ranks.jsonl'
EXCLUDED = 'excluded.jsonl'
RANK_CDF = 'rank_cdf.csv'
RANK_SUMMARY = 'rank_summary.csv'
CONDITION_MODEL = 'condition_model.csv'
DELTA_R2 = 'delta_r2.csv'
LENGTH_MODEL = 'length_model.csv'
LENGTH_SLOPES = 'length_slopes.csv'
MEAN_RANK_BY_LENGTH = 'mean_rank_by_length.csv'
PREFERENCE_MODEL = 'preference_model.csv'
PREFERENCE_PROPORTIONS = 'preference_proportions.csv'
CHOICE_AGREEMENT = 'choice_agreement.csv'


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1); exit 2 is reserved for backend failures"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _Run:
    """Resolved configuration plus the helpers every command needs"""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out_dir = Path(cfg.paths.out_dir)
        self.provenance = cfg.provenance()
        self.progress = not cfg.quiet and sys.stderr.isatty()

    def out(self, name: str) -> Path:
        return self.out_dir / name

    def say(self, message: str) -> None:
        if not self.cfg.quiet:
            print(message)

    def wrote(self, path) -> None:
        self.say(f"Wrote {path}")

    def dataset(self) -> Dataset:
        """The working dataset in out_dir, or the configured manifest before the first ingest"""
        path = self.out(DATASET)
        if path.exists():
            return read_manifest(path)
        self.cfg.require_paths('manifest')
        return read_manifest(self.cfg.paths.manifest)

    def artifact(self, name: str, configured: Optional[str] = None) -> Path:
        """An explicitly configured file, or else the upstream artifact in out_dir"""
        if configured:
            if not Path(configured).exists():
                raise MissingArtifact(f"{name} not found: {configured}")
            return Path(configured)
        path = self.out(name)
        if path.exists():
            return path
        raise MissingArtifact(f"{path} not found; run the command that produces it first")


# ========== Commands ==========

def cmd_ingest(run: _Run) -> int:
    run.cfg.require_paths('manifest')
    dataset = read_manifest(run.cfg.paths.manifest)
    if run.cfg.conditions:
        selected = set(run.cfg.conditions)
        dataset = Dataset(
            dataset.images.values(),
            [d for d in dataset.sorted_descriptions() if d.condition in selected],
        )

    write_manifest(dataset, run.out(DATASET), run.provenance)
    n_images, n_descriptions = dataset.shape()
    run.say(f"Ingested {n_images} images and {n_descriptions} descriptions")
    for condition in dataset.conditions():
        count = sum(1 for d in dataset.descriptions.values() if d.condition == condition)
        run.say(f"  {condition:<16} {count:>8}")
    run.wrote(run.out(DATASET))
    return 0


def cmd_embed(run: _Run) -> int:
    cfg = run.cfg
    dataset = run.dataset()
    if cfg.scorer.backend == PRECOMPUTED:
        cfg.require_paths('image_embeddings', 'text_embeddings')
    backend = get_embedding_backend(
        cfg.scorer,
        image_path=cfg.paths.image_embeddings,
        text_path=cfg.paths.text_embeddings,
    )

    reasons: Dict[str, str] = {}
    try:
        images = {dataset.images[i].store_key: dataset.images[i] for i in dataset.image_ids()}
        image_cache = EmbeddingCache(run.out(IMAGE_EMBEDDINGS))

        def embed_images(keys: List[str]):
            return backend.embed_images([images[k] for k in keys]).vectors

        image_vectors = image_cache.get_or_embed(
            list(images), embed_images, {k: backend.image_fingerprint(r) for k, r in images.items()}
        )
        unembedded = {
            image.image_id for image, vector in zip(images.values(), image_vectors) if vector is None
        }
        if unembedded:
            logger.warning("%d image(s) have no embedding and leave the contrast set", len(unembedded))

        active = {d.desc_id: d for d in dataset.active_descriptions()}
        for desc in active.values():
            if desc.target_image_id in unembedded:
                reasons[desc.desc_id] = MISSING_EMBEDDING
        to_embed = [desc_id for desc_id in active if desc_id not in reasons]
        text_cache = EmbeddingCache(run.out(TEXT_EMBEDDINGS))

        def embed_texts(keys: List[str]):
            batch = backend.embed_descriptions([active[k] for k in keys])
            for i, reason in batch.exclusions.items():
                reasons[keys[i]] = reason
            return batch.vectors

        text_vectors = text_cache.get_or_embed(
            to_embed, embed_texts, {k: backend.description_fingerprint(active[k]) for k in to_embed}
        )
        for desc_id, vector in zip(to_embed, text_vectors):
            if vector is None:
                reasons.setdefault(desc_id, MISSING_EMBEDDING)
    finally:
        backend.close()

    image_cache.flush()
    text_cache.flush()
    dataset = dataset.with_exclusions(reasons)
    write_manifest(dataset, run.out(DATASET), run.provenance)

    run.say(f"Embedded {len(image_cache.store)} images and {len(text_cache.store)} descriptions")
    if reasons:
        run.say(f"Excluded {len(reasons)} description(s):")
        for reason in sorted(set(reasons.values())):
            run.say(f"  {reason:<20} {sum(1 for r in reasons.values() if r == reason):>8}")
    for name in (IMAGE_EMBEDDINGS, TEXT_EMBEDDINGS, DATASET):
        run.wrote(run.out(name))
    return 0


def cmd_rank(run: _Run) -> int:
    cfg = run.cfg
    dataset = run.dataset()
    image_store = load_embeddings(run.artifact(IMAGE_EMBEDDINGS, cfg.paths.image_embeddings))
    text_store = load_embeddings(run.artifact(TEXT_EMBEDDINGS, cfg.paths.text_embeddings))

    contrast_ids = [i for i in dataset.image_ids() if dataset.images[i].store_key in image_store]
    if len(contrast_ids) < len(dataset.images):
        logger.warning("%d image(s) without embeddings are left out of the contrast set",
                       len(dataset.images) - len(contrast_ids))
    contrast = build_contrast_set(dataset, image_store, contrast_ids)

    results = rank_all(
        dataset, contrast, cfg.scorer, text_store,
        block_rows=cfg.rank.block_rows,
        workers=cfg.threads,
        subsample=cfg.rank.subsample,
        seed=cfg.rank.seed,
        progress=run.progress,
    )
    if not results:
        raise EmptyInput("No non-excluded descriptions to rank")
    excluded = [
        ExcludedRecord(d.desc_id, d.condition, d.exclusion_reason)
        for d in dataset.excluded_descriptions()
    ]

    write_rank_records(results, run.out(RANKS), run.provenance)
    write_excluded_records(excluded, run.out(EXCLUDED), run.provenance)
    write_table(cdf_frame(condition_cdfs(results)), run.out(RANK_CDF), run.provenance)
    summary = summarize_ranks(results)
    write_table(summary, run.out(RANK_SUMMARY), run.provenance)

    run.say(f"Ranked {len(results)} descriptions against {contrast.size} images ({len(excluded)} excluded)")
    for row in summary.itertuples(index=False):
        run.say(f"  {row.condition:<16} n={row.n:<7} mean rank={row.mean_rank:10.2f}  "
                f"median={row.median_rank:8.1f}  mean length={row.mean_length:7.1f}")
    for name in (RANKS, EXCLUDED, RANK_CDF, RANK_SUMMARY):
        run.wrote(run.out(name))
    return 0


def _overall_delta_row(model) -> Dict:
    return {
        'reference': model.reference, 'condition': 'all',
        'beta': np.nan, 'se': np.nan, 'z': np.nan, 'p': np.nan,
        'r_squared': model.full.r_squared, 'delta_r2': model.delta_r2, 'n_obs': model.full.n_obs,
    }


def _analyze_trials(run: _Run, trials) -> List[str]:
    stats = run.cfg.stats
    reference = stats.reference
    preference = [t for t in trials if t.study == PREFERENCE]
    specificity = [t for t in trials if t.study == SPECIFICITY]
    written = []

    fits = []
    if preference:
        fits.append(('preference', fit_preference_model(preference, reference).fit))
    if specificity:
        fits.append(('specificity', fit_choice_model(specificity, reference).fit))
    if preference and specificity:
        for pair in sorted({t.pair for t in preference} & {t.pair for t in specificity}):
            try:
                fits.append((f'specificity_rate[{pair[0]}|{pair[1]}]',
                             fit_specificity_rate_model(preference, specificity, pair)))
            except (EmptyInput, DegenerateInput, SeparationDetected, SingularDesign) as e:
                logger.warning("Skipping specificity-rate model for %s: %s", pair, e)
    write_table(fit_tables(fits), run.out(PREFERENCE_MODEL), run.provenance)
    written.append(PREFERENCE_MODEL)

    proportions = preference_proportions(trials, stats.seed, stats.n_resamples, stats.level)
    write_table(proportions, run.out(PREFERENCE_PROPORTIONS), run.provenance)
    written.append(PREFERENCE_PROPORTIONS)

    if preference and specificity:
        write_table(choice_agreement_table(preference, specificity), run.out(CHOICE_AGREEMENT), run.provenance)
        written.append(CHOICE_AGREEMENT)
    return written


def cmd_analyze(run: _Run) -> int:
    cfg = run.cfg
    stats = cfg.stats
    results = read_rank_records(run.out(RANKS))
    if not results:
        raise EmptyInput(f"{run.out(RANKS)} holds no rank results")

    model = fit_condition_model(results, stats.reference, control_length=True)
    write_table(condition_model_table(model), run.out(CONDITION_MODEL), run.provenance)

    pairwise = pairwise_condition_effects(results)
    delta = pd.concat([pd.DataFrame([_overall_delta_row(model)]), pairwise], ignore_index=True)
    write_table(delta, run.out(DELTA_R2), run.provenance)

    length_fit = fit_length_by_condition(results, stats.reference)
    write_table(fit_table(length_fit), run.out(LENGTH_MODEL), run.provenance)
    write_table(fit_length_slopes(results), run.out(LENGTH_SLOPES), run.provenance)

    binned = length_binned_means(
        results,
        bin_width_chars=stats.bin_width,
        min_bin_count=stats.min_bin_count,
        trim=stats.trim,
        n_resamples=stats.n_resamples,
        level=stats.level,
        seed=stats.seed,
    )
    write_table(binned_frame(binned), run.out(MEAN_RANK_BY_LENGTH), run.provenance)
    written = [CONDITION_MODEL, DELTA_R2, LENGTH_MODEL, LENGTH_SLOPES, MEAN_RANK_BY_LENGTH]

    trials = []
    for path in (cfg.paths.trials, cfg.paths.specificity_trials):
        if path:
            trials.extend(read_trials(path))
    if trials:
        written.extend(_analyze_trials(run, trials))

    run.say(f"Condition model (reference {stats.reference}, controlling for length), "
            f"delta R^2 = {model.delta_r2:.4f}")
    for name in model.full.coefficient_names:
        beta, se, z, p = model.full.coefficient(name)
        run.say(f"  {name:<28} beta={beta:10.3f}  se={se:8.3f}  z={z:8.2f}  p={p:.3g}")
    for name in written:
        run.wrote(run.out(name))
    return 0


def cmd_generate(run: _Run) -> int:
    cfg = run.cfg
    if not cfg.conditions:
        raise ValidationError("generate needs --conditions (or [run] conditions)")
    dataset = run.dataset()
    client = get_generation_client(cfg.generation)
    try:
        result = generate_variants(
            dataset,
            cfg.conditions,
            client,
            JobLedger(run.out(JOBS), run.provenance),
            parallelism=cfg.generation.parallelism,
            seed=cfg.generation.seed,
            progress=run.progress,
        )
    finally:
        client.close()

    write_manifest(result.dataset, run.out(DATASET), run.provenance)
    over_limit = sum(1 for j in result.completed if j.over_limit)
    run.say(f"Generated {len(result.completed)} of {len(result.jobs)} descriptions "
            f"({result.requests_issued} requests, {over_limit} over their length limit)")
    run.wrote(run.out(JOBS))
    run.wrote(run.out(DATASET))

    failures = result.failures
    if failures:
        transport = [j for j in failures if j.error_type in ('BackendUnavailable', 'ProtocolError')]
        message = f"{len(failures)} generation job(s) failed; see {run.out(JOBS)} and rerun to retry"
        if transport:
            raise BackendUnavailable(message)
        raise EmptyGeneration(message)
    return 0


def cmd_report(run: _Run) -> int:
    written = []
    cdf, provenance = read_table(run.artifact(RANK_CDF))
    if write_svg(rank_cdf_figure(cdf), run.out('rank_cdf.svg'), provenance):
        written.append('rank_cdf.svg')

    if run.out(MEAN_RANK_BY_LENGTH).exists():
        binned, provenance = read_table(run.out(MEAN_RANK_BY_LENGTH))
        if write_svg(mean_rank_by_length_figure(binned), run.out('mean_rank_by_length.svg'), provenance):
            written.append('mean_rank_by_length.svg')

    if run.out(PREFERENCE_PROPORTIONS).exists():
        proportions, provenance = read_table(run.out(PREFERENCE_PROPORTIONS))
        if write_svg(preference_figure(proportions), run.out('preferences.svg'), provenance):
            written.append('preferences.svg')

    if not written:
        logger.warning("No charts were exported; the CSV tables remain the report")
    for name in written:
        run.wrote(run.out(name))
    return 0


COMMANDS = {
    'ingest': cmd_ingest,
    'generate': cmd_generate,
    'embed': cmd_embed,
    'rank': cmd_rank,
    'analyze': cmd_analyze,
    'report': cmd_report,
}


# ========== Argument Parsing ==========

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog='specrank',
        description='Measure description specificity by target-image rank against a contrast set',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument('--config', help='Sectioned key=value run configuration file')
    parser.add_argument('--seed', type=int, help='Seed for ranking, statistics and generation')
    parser.add_argument('--out-dir', help='Directory for all artifacts (default: specrank_out)')
    parser.add_argument('--threads', type=int, help=f'Worker threads (default: {Config.THREADS})')
    parser.add_argument('--conditions', help='Comma separated conditions to keep or generate')
    parser.add_argument('--quiet', action='store_true', default=None, help='Only log warnings; no progress line')

    sub = parser.add_subparsers(dest='command', required=True, metavar='COMMAND', parser_class=_Parser)

    ingest = sub.add_parser('ingest', help='Validate a manifest and write the working dataset')
    ingest.add_argument('--manifest', help='Line-delimited manifest of images and descriptions')

    generate = sub.add_parser('generate', help='Generate description variants with a generation service')
    generate.add_argument('--endpoint', help='Generation service URL (or SPECRANK_GEN_ENDPOINT)')
    generate.add_argument('--model', help='Model name recorded with every generated description')
    generate.add_argument('--temperature', type=float, help='Sampling temperature passed to the service')
    generate.add_argument('--parallelism', type=int, help='Jobs in flight (default: 4)')

    embed = sub.add_parser('embed', help='Collect image and description embeddings')
    embed.add_argument('--backend', choices=['precomputed', 'remote_service'], help='Embedding source')
    embed.add_argument('--endpoint', help='Embedding service URL (or SPECRANK_EMBED_ENDPOINT)')
    embed.add_argument('--image-embeddings', help='Precomputed image embedding file')
    embed.add_argument('--text-embeddings', help='Precomputed description embedding file')

    rank = sub.add_parser('rank', help='Rank each target image against the contrast set')
    rank.add_argument('--image-embeddings', help='Image embedding file (default: out-dir artifact)')
    rank.add_argument('--text-embeddings', help='Description embedding file (default: out-dir artifact)')
    rank.add_argument('--subsample', type=int, help='Contrast-set size per description, target included')
    rank.add_argument('--block-rows', type=int, help='Descriptions per scoring block (default: 256)')

    analyze = sub.add_parser('analyze', help='Fit the rank, length and preference models')
    analyze.add_argument('--reference', help='Reference condition for treatment coding (default: original)')
    analyze.add_argument('--trials', help='Line-delimited preference trials')
    analyze.add_argument('--specificity-trials', help='Line-delimited specificity-study trials')
    analyze.add_argument('--bin-width', type=int, help='Length bin width in characters (default: 10)')
    analyze.add_argument('--min-bin-count', type=int, help='Smallest reported length bin (default: 10)')
    analyze.add_argument('--n-resamples', type=int, help='Bootstrap resamples (default: 2000)')

    sub.add_parser('report', help='Render SVG charts from the CSV tables')
    return parser


# argparse dest -> RunConfig 'section.key'
_FLAG_KEYS = {
    'out_dir': 'paths.out_dir',
    'threads': 'run.threads',
    'conditions': 'run.conditions',
    'quiet': 'run.quiet',
    'manifest': 'paths.manifest',
    'image_embeddings': 'paths.image_embeddings',
    'text_embeddings': 'paths.text_embeddings',
    'trials': 'paths.trials',
    'specificity_trials': 'paths.specificity_trials',
    'backend': 'scorer.backend',
    'subsample': 'rank.subsample',
    'block_rows': 'rank.block_rows',
    'reference': 'stats.reference',
    'bin_width': 'stats.bin_width',
    'min_bin_count': 'stats.min_bin_count',
    'n_resamples': 'stats.n_resamples',
    'model': 'generation.model',
    'temperature': 'generation.temperature',
    'parallelism': 'generation.parallelism',
}


def flag_overrides(args: argparse.Namespace) -> Dict[str, object]:
    values = vars(args)
    overrides = {key: values.get(dest) for dest, key in _FLAG_KEYS.items()}
    if values.get('endpoint') is not None:
        section = 'generation' if args.command == 'generate' else 'scorer'
        overrides[f'{section}.endpoint'] = args.endpoint
    if args.seed is not None:
        for section in ('rank', 'stats', 'generation'):
            overrides[f'{section}.seed'] = args.seed
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else Config.LOG_LEVEL,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        cfg = load_run_config(args.config, flag_overrides(args))
        if cfg.quiet:
            logging.getLogger().setLevel(logging.WARNING)
        return COMMANDS[args.command](_Run(cfg))
    except SpecRankError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
