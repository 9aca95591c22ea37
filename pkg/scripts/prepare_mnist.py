#!/usr/bin/env python3
"""
Prepare a binarized MNIST training set as a dataset cache.

Pools each 28x28 image to 7x7, binarizes at the threshold, flattens in snake
order, draws the training images without replacement (labels mixed) and
writes "bitstring weight" lines.

Usage:
    python scripts/prepare_mnist.py \
      --idx data/train-images-idx3-ubyte \
      --out data/mnist_7x7_100.txt \
      --samples 100 --seed 0

The cache is consumed by configs with `dataset.kind: cache`.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from tnbm.datasets import load_mnist_idx, mnist_prepare, sample_training_set, write_dataset_cache
from tnbm.errors import FormatError

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def main() -> int:
    parser = argparse.ArgumentParser(description="Build a binarized MNIST dataset cache")
    parser.add_argument("--idx", type=str, required=True, help="IDX image file (magic 0x00000803)")
    parser.add_argument("--out", type=str, required=True, help="Output cache path")
    parser.add_argument("--samples", type=int, default=100, help="Training images to draw (default: 100)")
    parser.add_argument("--seed", type=int, default=0, help="Sampling seed (default: 0)")
    parser.add_argument("--out-side", type=int, default=7, help="Pooled grid side (default: 7)")
    parser.add_argument("--threshold", type=float, default=0.5, help="Binarization threshold (default: 0.5)")
    args = parser.parse_args()

    try:
        images = load_mnist_idx(args.idx)
    except FormatError as e:
        logger.error(f"❌ {e} (offset={e.offset}, expected={e.expected}, actual={e.actual})")
        return 2
    if args.samples > len(images):
        logger.error(f"❌ Requested {args.samples} samples but the file holds {len(images)} images")
        return 1

    bits = np.array([mnist_prepare(image, args.out_side, args.threshold) for image in images])
    dataset = sample_training_set(bits, args.samples, np.random.default_rng(args.seed), replace=False)
    path = write_dataset_cache(dataset, args.out)
    logger.info(f"📊 {args.samples} images -> {dataset.n_samples} distinct bitstrings of length {dataset.n_sites}")
    logger.info(f"💾 Dataset cache saved: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
