#!/usr/bin/env python3
"""
Write the synthetic three-condition corpus used by the end-to-end test.

Composite descriptions get the least embedding noise, original and verbose
share a higher noise level, so mean ranks should order composite first with
original and verbose close together.

Usage:
    python scripts/build_synthetic_fixture.py --out fixtures/synthetic
    python app.py --out-dir runs/synthetic ingest --manifest fixtures/synthetic/manifest.jsonl
    python app.py --out-dir runs/synthetic embed \\
        --image-embeddings fixtures/synthetic/image_embeddings.emb \\
        --text-embeddings fixtures/synthetic/text_embeddings.emb
"""

import argparse
import os
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from specrank.embeddings import save_embeddings, write_manifest
from specrank.synthetic import build_synthetic_corpus


def build_fixture(out_dir: Path, n_images: int, dim: int, seed: int) -> None:
    corpus = build_synthetic_corpus(n_images=n_images, dim=dim, seed=seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(corpus.dataset, out_dir / 'manifest.jsonl')
    save_embeddings(corpus.image_store, out_dir / 'image_embeddings.emb')
    save_embeddings(corpus.text_store, out_dir / 'text_embeddings.emb')

    n_images, n_descriptions = corpus.dataset.shape()
    print(f"Images:        {n_images}")
    print(f"Descriptions:  {n_descriptions}")
    print(f"Dimension:     {dim}")
    print(f"Seed:          {seed}")
    print(f"Written to:    {out_dir}")


def main():
    """Parse arguments and write the fixture."""
    parser = argparse.ArgumentParser(
        description='Build the synthetic specificity corpus',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__
    )

    parser.add_argument(
        '--out',
        required=True,
        help='Directory for manifest.jsonl, image_embeddings.emb and text_embeddings.emb'
    )

    parser.add_argument(
        '--images',
        type=int,
        default=300,
        help='Number of images (default: 300)'
    )

    parser.add_argument(
        '--dim',
        type=int,
        default=64,
        help='Embedding dimension (default: 64)'
    )

    parser.add_argument(
        '--seed',
        type=int,
        default=0,
        help='Seed (default: 0)'
    )

    args = parser.parse_args()
    build_fixture(Path(args.out), args.images, args.dim, args.seed)


if __name__ == '__main__':
    main()
