#!/usr/bin/env python3
"""
Benchmark the cost of the Newton building blocks.

Times hvp() on a grid of tensor dimensions D and sample counts N_s, and the
dense Newton solve for D in {50, 100, 200}; logs the fitted log-log scaling
exponents and writes all timings to CSV.

Usage:
    python scripts/benchmark_complexity.py --out results/benchmark/timings.csv

Outputs:
    - timings CSV (columns: operation, dim, n_samples, seconds)
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from tnbm.benchmark import fit_exponent, hvp_grid, time_dense_solve

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def _int_list(text: str):
    return [int(part) for part in text.split(',') if part.strip()]


def main() -> int:
    parser = argparse.ArgumentParser(description="Time hvp and dense Newton solves")
    parser.add_argument("--out", type=str, required=True, help="Output CSV path")
    parser.add_argument("--dims", type=str, default="100,200,400", help="hvp dimensions D")
    parser.add_argument("--samples", type=str, default="250,500,1000", help="hvp sample counts N_s")
    parser.add_argument("--dense-dims", type=str, default="50,100,200", help="Dense solve dimensions D")
    parser.add_argument("--repeats", type=int, default=20, help="Timed repeats per point (default: 20)")
    args = parser.parse_args()

    dims = _int_list(args.dims)
    sample_counts = _int_list(args.samples)
    dense_dims = _int_list(args.dense_dims)

    logger.info("=" * 60)
    logger.info("COMPLEXITY BENCHMARK")
    logger.info("=" * 60)
    records = hvp_grid(dims, sample_counts, args.repeats)
    records += [time_dense_solve(d, 100, max(args.repeats // 4, 3)) for d in dense_dims]

    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['operation', 'dim', 'n_samples', 'seconds'])
        for r in records:
            writer.writerow([r.operation, r.dim, r.n_samples, f"{r.seconds:.6e}"])

    hvp_records = [r for r in records if r.operation == 'hvp']
    work = [r.dim * r.n_samples for r in hvp_records]
    hvp_exponent = fit_exponent(work, [r.seconds for r in hvp_records])
    dense_records = [r for r in records if r.operation == 'dense_solve']
    dense_exponent = fit_exponent([r.dim for r in dense_records], [r.seconds for r in dense_records])

    logger.info(f"📊 hvp: time ~ (D N_s)^{hvp_exponent:.2f}")
    logger.info(f"📊 dense solve: time ~ D^{dense_exponent:.2f}")
    if not 0.7 <= hvp_exponent <= 1.3:
        logger.warning("⚠️  hvp scaling deviates from linear in D N_s")
    if dense_exponent <= 2.0:
        logger.warning("⚠️  dense solve scaling is not superquadratic (small sizes are overhead-bound)")
    logger.info(f"💾 Timings saved: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
