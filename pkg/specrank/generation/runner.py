"""
Description variant generation

Plans one job per (image, condition), skips jobs the ledger already has as
done with the same prompt and model, dispatches the rest to a generation
client with bounded parallelism, and records every outcome in the ledger.
Failed jobs stay in the ledger and are retried on the next run.
"""

import base64
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from specrank.conditions import COMPOSITE, K_LIMITED, ORIGINAL, VERBOSE
from specrank.embeddings.manifest import Dataset, DescriptionRecord, ImageRecord, char_length
from specrank.errors import EmptyGeneration, SpecRankError, ValidationError
from .clients.interface import GenerationClient
from .ledger import DONE, FAILED, GenerationJob, JobLedger, job_id
from .prompts import build_prompt, char_limit, get_template, k_limit

logger = logging.getLogger(__name__)

DEFAULT_PARALLELISM = 4


@dataclass(frozen=True)
class GenerationResult:
    dataset: Dataset
    jobs: Tuple[GenerationJob, ...]
    requests_issued: int

    @property
    def failures(self) -> Tuple[GenerationJob, ...]:
        return tuple(j for j in self.jobs if j.status == FAILED)

    @property
    def completed(self) -> Tuple[GenerationJob, ...]:
        return tuple(j for j in self.jobs if j.status == DONE)


def _original_captions(dataset: Dataset, image: ImageRecord) -> List[str]:
    """Reference captions, falling back to the image's original-condition descriptions"""
    if image.reference_captions:
        return list(image.reference_captions)
    return [d.text for d in dataset.descriptions_for(image.image_id, ORIGINAL)]


def _job_for(dataset: Dataset, image: ImageRecord, condition: str, model_tag: str) -> GenerationJob:
    template = get_template(condition)
    captions = _original_captions(dataset, image)
    k = None

    if condition == VERBOSE:
        if not captions:
            raise ValidationError(f"Image {image.image_id} has no caption to rephrase")
        originals = dataset.descriptions_for(image.image_id, ORIGINAL)
        prompt = build_prompt(condition, [originals[0].text if originals else captions[0]])
    elif condition == COMPOSITE:
        prompt = build_prompt(condition, captions)
    else:
        if condition == K_LIMITED:
            if not captions:
                raise ValidationError(f"Image {image.image_id} has no reference captions to derive k from")
            k = k_limit([char_length(c) for c in captions])
        prompt = build_prompt(condition, k=k)

    attachment = None
    if template.needs_image:
        if not image.source_uri or not Path(image.source_uri).is_file():
            raise ValidationError(
                f"Image {image.image_id} needs a local file for {condition}; source_uri={image.source_uri!r}"
            )
        attachment = image.source_uri
    return GenerationJob(
        image_id=image.image_id, condition=condition, rendered_prompt=prompt,
        model_tag=model_tag, attachment=attachment, k=k,
    )


def plan_jobs(
    dataset: Dataset,
    conditions: Iterable[str],
    model_tag: str,
    ledger_jobs: Optional[Mapping[str, GenerationJob]] = None,
) -> List[GenerationJob]:
    """
    One job per (image, condition), ordered by job id

    A pair whose desc_id the dataset already holds is planned only when the
    ledger has a record for it, i.e. the description was generated earlier;
    descriptions supplied with the manifest are never overwritten.

    Raises:
        ValidationError / ArityError: an image lacks what the condition's prompt needs
    """
    ledger_jobs = ledger_jobs or {}
    jobs = []
    for condition in sorted(set(conditions)):
        get_template(condition)
        for image_id in dataset.image_ids():
            key = job_id(image_id, condition)
            if key in dataset.descriptions and key not in ledger_jobs:
                continue
            jobs.append(_job_for(dataset, dataset.images[image_id], condition, model_tag))
    return sorted(jobs, key=lambda j: j.job_id)


def job_seed(seed: int, job: GenerationJob) -> int:
    sequence = np.random.SeedSequence([seed, zlib.crc32(job.job_id.encode('utf-8'))])
    return int(sequence.generate_state(1)[0])


def _run_job(client: GenerationClient, job: GenerationJob, seed: int) -> GenerationJob:
    try:
        image_b64 = None
        if job.attachment:
            image_b64 = base64.b64encode(Path(job.attachment).read_bytes()).decode('ascii')
        text = client.generate(job.rendered_prompt, image_b64=image_b64, seed=job_seed(seed, job)).strip()
        if not text:
            raise EmptyGeneration(f"Empty output for {job.job_id}")
    except (SpecRankError, OSError) as e:
        logger.warning("Generation job %s failed: %s", job.job_id, e)
        return job.failed(e)

    limit = char_limit(job.condition, job.k)
    over_limit = limit is not None and char_length(text) > limit
    if over_limit:
        logger.warning("Job %s produced %d characters, over its %d limit", job.job_id, char_length(text), limit)
    return job.done(text, over_limit)


def generate_variants(
    dataset: Dataset,
    conditions: Sequence[str],
    client: GenerationClient,
    ledger: JobLedger,
    parallelism: int = DEFAULT_PARALLELISM,
    seed: int = 0,
    progress: bool = False,
) -> GenerationResult:
    """
    Generate the requested description conditions for every image

    Args:
        dataset: Source dataset (images, reference captions, original descriptions)
        conditions: Generated conditions to produce
        client: Generation client
        ledger: Job ledger; completed jobs found here are not requested again
        parallelism: Jobs in flight at once
        seed: Base seed; each job gets its own derived seed
        progress: Show a textual progress line

    Returns:
        GenerationResult whose dataset holds one new description per done job
        (desc_id "<image_id>:<condition>"); every planned job appears in jobs
        as either done or failed
    """
    if parallelism < 1:
        raise ValidationError("parallelism must be >= 1")
    model_tag = client.model_tag()
    previous = ledger.load()
    planned = plan_jobs(dataset, conditions, model_tag, previous)

    final: Dict[str, GenerationJob] = {}
    to_run: List[GenerationJob] = []
    for job in planned:
        earlier = previous.get(job.job_id)
        if (earlier is not None and earlier.status == DONE
                and earlier.rendered_prompt == job.rendered_prompt and earlier.model_tag == model_tag):
            final[job.job_id] = earlier
        else:
            to_run.append(job)

    if final:
        logger.info("Resuming: %d of %d jobs already done", len(final), len(planned))
    ledger.extend(to_run)

    if to_run:
        with ThreadPoolExecutor(max_workers=min(parallelism, len(to_run))) as pool, \
                tqdm(total=len(to_run), desc='generating', unit='job', disable=not progress) as bar:
            futures = [pool.submit(_run_job, client, job, seed) for job in to_run]
            for future in as_completed(futures):
                outcome = future.result()
                ledger.append(outcome)
                final[outcome.job_id] = outcome
                bar.update(1)

    jobs = tuple(final[job.job_id] for job in planned)
    new_records = []
    for j in jobs:
        if j.status != DONE:
            continue
        record = DescriptionRecord.create(j.job_id, j.image_id, j.condition, j.output_text, model_tag=j.model_tag)
        existing = dataset.descriptions.get(j.job_id)
        # An unchanged description keeps the exclusion embed recorded for it
        if existing is not None and (existing.text, existing.model_tag) == (record.text, record.model_tag):
            record = existing
        new_records.append(record)
    failed = sum(1 for j in jobs if j.status == FAILED)
    if failed:
        logger.warning("%d of %d generation jobs failed; rerun to retry them", failed, len(jobs))
    return GenerationResult(dataset.with_descriptions(new_records, replace=True), jobs, len(to_run))
