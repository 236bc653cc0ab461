#!/usr/bin/env python3
"""
Print what an embedding file holds: dimension, count, a few keys and norm statistics.

Usage:
    python scripts/inspect_embeddings.py runs/synthetic/image_embeddings.emb
"""

import argparse
import os
import sys

import numpy as np

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from specrank.embeddings import load_embeddings
from specrank.embeddings.vectors import NORM_TOLERANCE
from specrank.errors import SpecRankError


def inspect(path: str, show: int) -> None:
    store = load_embeddings(path)
    keys = store.keys()

    print(f"\n{'='*60}")
    print(f"EMBEDDING FILE: {path}")
    print(f"{'='*60}\n")
    print(f"   Dimension:  {store.dim}")
    print(f"   Vectors:    {len(store)}")

    if not keys:
        print("   (empty)")
        return

    norms = np.linalg.norm(store.matrix().astype(np.float64), axis=1)
    unit = int(np.count_nonzero(np.abs(norms - 1.0) <= NORM_TOLERANCE))
    print(f"   Norm min:   {norms.min():.6f}")
    print(f"   Norm mean:  {norms.mean():.6f}")
    print(f"   Norm max:   {norms.max():.6f}")
    print(f"   Unit norm:  {unit} of {len(keys)}")

    print(f"\n   First {min(show, len(keys))} keys:")
    for key in keys[:show]:
        print(f"     - {key}")


def main():
    """Parse arguments and inspect the file."""
    parser = argparse.ArgumentParser(description='Inspect a specrank embedding file')
    parser.add_argument('path', help='Embedding file')
    parser.add_argument('--show', type=int, default=5, help='Keys to list (default: 5)')
    args = parser.parse_args()

    try:
        inspect(args.path, args.show)
    except SpecRankError as e:
        print(f"❌ {type(e).__name__}: {e}")
        sys.exit(e.exit_code)


if __name__ == '__main__':
    main()
