#!/usr/bin/env python3
"""
Training data: bars-and-stripes synthesis, MNIST IDX ingestion with pooling
and snake ordering, IRIS CSV loading, and weighted bitstring datasets.

A Dataset is a set of distinct bitstrings with empirical frequencies n_x
(summing to 1). Duplicates are merged when a dataset is built from raw
samples, so repetition in a training draw becomes weight.

Usage:
    from tnbm.datasets import gen_bas, sample_training_set

    patterns = gen_bas(4)
    train = sample_training_set(patterns, 60, np.random.default_rng(0), replace=True)
"""

import csv
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, FormatError, ParseError
from .mps import one_hot

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
IDX_IMAGE_MAGIC = 0x00000803
IDX_HEADER_BYTES = 16
MNIST_SIDE = 28


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Distinct samples with frequencies.

    Args:
        samples: (N_s, N) integer array, rows unique
        weights: (N_s,) nonnegative frequencies summing to 1
        site_dim: Alphabet size d
    """
    samples: np.ndarray
    weights: np.ndarray
    site_dim: int = 2

    def __post_init__(self):
        samples = np.atleast_2d(np.array(self.samples, dtype=np.int64))
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if samples.shape[0] != weights.size:
            raise DimensionError(f"{samples.shape[0]} samples but {weights.size} weights")
        if samples.size and (samples.min() < 0 or samples.max() >= self.site_dim):
            raise DimensionError(f"Sample symbols must lie in [0, {self.site_dim - 1}]")
        if np.any(weights < 0):
            raise ValueError("Weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"Weights must sum to 1, got {weights.sum():.15f}")
        if np.unique(samples, axis=0).shape[0] != samples.shape[0]:
            raise ValueError("Dataset samples must be unique; use Dataset.from_samples to merge")
        samples.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def from_samples(
        cls,
        samples,
        weights: Optional[Sequence[float]] = None,
        site_dim: int = 2
    ) -> "Dataset":
        """
        Merge duplicate rows by summing their weights, then normalize.

        Args:
            samples: (M, N) raw samples, duplicates allowed
            weights: Optional per-row weights (counts by default)
            site_dim: Alphabet size d
        """
        samples = np.atleast_2d(np.asarray(samples, dtype=np.int64))
        raw = np.ones(samples.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        if raw.size != samples.shape[0]:
            raise DimensionError(f"{samples.shape[0]} samples but {raw.size} weights")
        unique, inverse = np.unique(samples, axis=0, return_inverse=True)
        merged = np.bincount(inverse.reshape(-1), weights=raw, minlength=unique.shape[0])
        total = merged.sum()
        if total <= 0:
            raise ValueError("Dataset needs positive total weight")
        return cls(unique, merged / total, site_dim)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_sites(self) -> int:
        return self.samples.shape[1]

    def site_vectors(self, site_dim: Optional[int] = None) -> np.ndarray:
        """(N_s, N, d) one-hot site vectors."""
        return one_hot(self.samples, self.site_dim if site_dim is None else site_dim)

    def bitstrings(self) -> List[str]:
        return [''.join(str(int(s)) for s in row) for row in self.samples]


@dataclass(frozen=True, eq=False)
class GridImage:
    """Grayscale image with pixel values in [0, 1]."""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or min(pixels.shape) < 1:
            raise DimensionError(f"Image must be a non-empty 2-D grid, got shape {pixels.shape}")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValueError("Pixel values must lie in [0, 1]")
        object.__setattr__(self, 'pixels', pixels)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ContinuousRecord:
    features: Tuple[float, ...]
    label: Optional[str] = None


def gen_bas(n: int, snake: bool = False) -> Dataset:
    """
    All distinct bars-and-stripes patterns on an n x n grid, uniformly weighted.

    Bars have constant columns, stripes constant rows; the all-0 and all-1
    patterns appear once, giving 2^(n+1) - 2 patterns.

    Args:
        n: Grid side (>= 1)
        snake: Flatten in snake order instead of row-major
    """
    if n < 1:
        raise DimensionError(f"Grid side must be >= 1, got {n}")
    grids = []
    for bits in itertools.product((0, 1), repeat=n):
        line = np.array(bits, dtype=np.int64)
        grids.append(np.tile(line, (n, 1)))
        grids.append(np.tile(line[:, None], (1, n)))
    flatten = snake_flatten if snake else np.ravel
    patterns = np.unique(np.array([flatten(g) for g in grids]), axis=0)
    return Dataset(patterns, np.full(patterns.shape[0], 1.0 / patterns.shape[0]))


def snake_order(rows: int, cols: int) -> List[Tuple[int, int]]:
    """
    Boustrophedon scan: row 0 left to right, row 1 right to left, and so on.

    Returns:
        Grid coordinates in chain order
    """
    order = []
    for r in range(rows):
        columns = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        order.extend((r, c) for c in columns)
    return order


def snake_permutation(rows: int, cols: int) -> np.ndarray:
    """Row-major flat index at each chain position."""
    return np.array([r * cols + c for r, c in snake_order(rows, cols)], dtype=np.int64)


def snake_flatten(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid)
    return grid.reshape(-1)[snake_permutation(*grid.shape)]


def mnist_prepare(image, out_side: int = 7, threshold: float = 0.5) -> np.ndarray:
    """
    Average-pool a 28 x 28 image to out_side x out_side, binarize and snake-flatten.

    Args:
        image: GridImage or (28, 28) array with values in [0, 1]
        out_side: Pooled grid side (must divide 28)
        threshold: Pixel is 1 iff pooled value > threshold

    Returns:
        Bitstring of length out_side^2 in chain order
    """
    pixels = image.pixels if isinstance(image, GridImage) else np.asarray(image, dtype=np.float64)
    if pixels.shape != (MNIST_SIDE, MNIST_SIDE):
        raise DimensionError(f"Expected a {MNIST_SIDE}x{MNIST_SIDE} image, got {pixels.shape}")
    if MNIST_SIDE % out_side:
        raise DimensionError(f"Pooled side {out_side} does not divide {MNIST_SIDE}")
    block = MNIST_SIDE // out_side
    pooled = pixels.reshape(out_side, block, out_side, block).mean(axis=(1, 3))
    return snake_flatten((pooled > threshold).astype(np.int64))


def load_mnist_idx(path: Union[str, Path]) -> List[GridImage]:
    """
    Parse an IDX image file (big-endian, magic 0x00000803) into [0, 1] images.

    Raises:
        FormatError: bad magic, short header or truncated payload
    """
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(
            f"IDX file too short for a magic number: {len(data)} bytes",
            offset=0, expected=4, actual=len(data)
        )
    magic = int.from_bytes(data[0:4], 'big')
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"Bad IDX magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}",
            offset=0, expected=IDX_IMAGE_MAGIC, actual=magic
        )
    if len(data) < IDX_HEADER_BYTES:
        raise FormatError(
            f"Truncated IDX header: expected {IDX_HEADER_BYTES} bytes, got {len(data)}",
            offset=len(data), expected=IDX_HEADER_BYTES, actual=len(data)
        )
    count = int.from_bytes(data[4:8], 'big')
    rows = int.from_bytes(data[8:12], 'big')
    cols = int.from_bytes(data[12:16], 'big')
    expected = count * rows * cols
    actual = len(data) - IDX_HEADER_BYTES
    if actual < expected:
        raise FormatError(
            f"Truncated IDX payload: expected {expected} bytes, got {actual}",
            offset=IDX_HEADER_BYTES + actual, expected=expected, actual=actual
        )
    if count == 0:
        return []
    payload = np.frombuffer(data, dtype=np.uint8, count=expected, offset=IDX_HEADER_BYTES)
    images = payload.reshape(count, rows, cols) / 255.0
    logger.info(f"✅ Loaded {count} images of {rows}x{cols} from {path}")
    return [GridImage(image) for image in images]


def _parse_float(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except ValueError:
        return None


def scale_min_max(records: Sequence[ContinuousRecord]) -> List[ContinuousRecord]:
    """Per-feature min-max scaling to [0, 1]; constant features map to 0."""
    if not records:
        return []
    features = np.array([r.features for r in records], dtype=np.float64)
    low = features.min(axis=0)
    span = features.max(axis=0) - low
    span[span == 0] = 1.0
    scaled = (features - low) / span
    return [
        ContinuousRecord(tuple(float(v) for v in row), record.label)
        for row, record in zip(scaled, records)
    ]


def load_iris_csv(
    path: Union[str, Path],
    scale: bool = True,
    n_features: int = 4
) -> List[ContinuousRecord]:
    """
    Read numeric feature rows with an optional trailing label column.

    A first row whose feature cells are not all numeric is taken as a header.

    Args:
        path: CSV file
        scale: Min-max scale each feature to [0, 1]
        n_features: Number of leading numeric columns

    Raises:
        ParseError: non-numeric or missing feature cell (1-based row and column)
    """
    records = []
    with open(path, newline='') as f:
        for row_number, row in enumerate(csv.reader(f), start=1):
            cells = [cell.strip() for cell in row]
            if not any(cells):
                continue
            values = [_parse_float(cell) for cell in cells[:n_features]]
            if row_number == 1 and any(v is None for v in values):
                logger.debug(f"Treating first row of {path} as header: {cells}")
                continue
            if len(cells) < n_features:
                raise ParseError(
                    f"Expected {n_features} features, found {len(cells)}",
                    row=row_number, column=len(cells) + 1
                )
            for column, value in enumerate(values, start=1):
                if value is None:
                    raise ParseError(
                        f"Non-numeric feature {cells[column - 1]!r}",
                        row=row_number, column=column
                    )
            label = cells[n_features] if len(cells) > n_features and cells[n_features] else None
            records.append(ContinuousRecord(tuple(values), label))
    logger.info(f"✅ Loaded {len(records)} records from {path}")
    return scale_min_max(records) if scale else records


def sample_training_set(
    pool,
    n_samples: int,
    rng: np.random.Generator,
    replace: bool = True
) -> Dataset:
    """
    Draw a training multiset and merge it into a weighted Dataset.

    Args:
        pool: Dataset (drawn according to its weights) or (M, N) array of
              raw samples (drawn uniformly by row)
        n_samples: Number of draws
        rng: Seeded generator
        replace: Draw with replacement (repetitions become weight)
    """
    if isinstance(pool, Dataset):
        rows, probs, site_dim = pool.samples, pool.weights, pool.site_dim
    else:
        rows = np.atleast_2d(np.asarray(pool, dtype=np.int64))
        probs = None
        site_dim = max(2, int(rows.max()) + 1) if rows.size else 2
    if not replace and n_samples > rows.shape[0]:
        raise ValueError(f"Cannot draw {n_samples} of {rows.shape[0]} samples without replacement")
    if replace:
        picks = rng.choice(rows.shape[0], size=n_samples, replace=True, p=probs)
    else:
        picks = rng.choice(rows.shape[0], size=n_samples, replace=False)
    return Dataset.from_samples(rows[picks], site_dim=site_dim)


def write_dataset_cache(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Write one "bitstring weight" line per sample."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        for bits, weight in zip(dataset.bitstrings(), dataset.weights):
            f.write(f"{bits} {float(weight)!r}\n")
    return path


def read_dataset_cache(path: Union[str, Path], site_dim: int = 2) -> Dataset:
    """
    Read a "bitstring weight" file; blank lines and '#' comments are skipped.

    Weights are renormalized to sum to 1.
    """
    samples = []
    weights = []
    with open(path) as f:
        for row_number, line in enumerate(f, start=1):
            text = line.strip()
            if not text or text.startswith('#'):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(f"Expected 'bitstring weight', got {text!r}", row=row_number, column=1)
            bits, weight_text = parts
            if not bits.isdigit():
                raise ParseError(f"Invalid bitstring {bits!r}", row=row_number, column=1)
            weight = _parse_float(weight_text)
            if weight is None:
                raise ParseError(f"Invalid weight {weight_text!r}", row=row_number, column=2)
            samples.append([int(ch) for ch in bits])
            weights.append(weight)
    if not samples:
        raise ParseError("Dataset cache holds no samples", row=0, column=0)
    if len({len(s) for s in samples}) != 1:
        raise DimensionError("Bitstrings in the dataset cache differ in length")
    return Dataset.from_samples(np.array(samples), weights, site_dim)
