"""
Coexistence trend: density exit times of the q-voter model against the voter model.

From product-1/2 initial data on an L x L torus, records the first time the
density leaves (0.2, 0.8) for q < 1 and for q = 1, run on paired seeds (the
same initial configuration for both). Writes exit_times.csv and a JSON
summary with the two medians and their ratio.

Usage:
    python scripts/coexistence_trend.py --side 64 --pairs 200 --q 0.95 --out output/coexistence
"""

import argparse
import sys
from functools import partial
from pathlib import Path

import numpy as np

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app.config import settings
from app.lattice.kernels import kernel_uniform, nearest_neighbour
from app.lattice.rates import qvoter
from app.logging_config import get_logger
from app.services.outputs import write_csv, write_summary
from app.services.replicates import run_batches
from app.services.simulator import density_exit_time

logger = get_logger(__name__)

# Required ratio of median exit times (q < 1 over q = 1)
TARGET_RATIO = 3.0


def _pair_batch(side, q, band, horizon, seed, start, stop) -> list[dict]:
    kernel = kernel_uniform(nearest_neighbour(2))
    perturbed, voter_model = qvoter(kernel, q), qvoter(kernel, 1.0)
    rows = []
    for replicate in range(start, stop):
        rows.append(
            {
                "pair": replicate,
                "exit_q": density_exit_time(perturbed, side, band, seed, replicate, horizon),
                "exit_voter": density_exit_time(voter_model, side, band, seed, replicate, horizon),
            }
        )
        logger.debug(f"pair {replicate}: {rows[-1]['exit_q']:.4g} vs {rows[-1]['exit_voter']:.4g}")
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description="Median density exit times, q-voter against voter")
    parser.add_argument("--side", type=int, default=64)
    parser.add_argument("--pairs", type=int, default=200)
    parser.add_argument("--q", type=float, default=0.95)
    parser.add_argument("--horizon", type=float, default=1e4, help="cap on each run")
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    parser.add_argument("--workers", type=int, default=settings.WORKERS)
    parser.add_argument("--out", default=str(settings.OUTPUT_DIR / "coexistence"))
    args = parser.parse_args()

    band = (0.2, 0.8)
    task = partial(_pair_batch, args.side, args.q, band, args.horizon, args.seed)
    rows = [row for batch in run_batches(task, args.pairs, args.workers, batch_size=8) for row in batch]

    out_dir = Path(args.out)
    write_csv(rows, out_dir / "exit_times.csv", ["pair", "exit_q", "exit_voter"])
    median_q = float(np.median([row["exit_q"] for row in rows]))
    median_voter = float(np.median([row["exit_voter"] for row in rows]))
    ratio = median_q / median_voter if median_voter > 0 else float("inf")
    write_summary(
        {
            "side": args.side,
            "pairs": args.pairs,
            "q": args.q,
            "seed": args.seed,
            "median_exit_q": median_q,
            "median_exit_voter": median_voter,
            "ratio": ratio,
            "censored_q": sum(row["exit_q"] >= args.horizon for row in rows),
        },
        out_dir / "summary.json",
    )
    print(f"median exit time: q={args.q}: {median_q:.4g}, voter: {median_voter:.4g}, ratio {ratio:.3g}")
    return 0 if ratio >= TARGET_RATIO else 3


if __name__ == "__main__":
    sys.exit(main())
