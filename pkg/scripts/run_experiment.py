"""Run the full simulation experiment and write the two-panel report.

Equivalent to `retention evaluate --grid configs/experiment.toml --out report.csv`
but with per-replication progress on stderr by default.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from retention.evaluation import (  # noqa: E402
    ExperimentConfig,
    format_report,
    run_experiment,
    write_report_csv,
)

def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--n-test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="report.csv")
    args = ap.parse_args()

    config = ExperimentConfig(
        replications=args.reps, n=args.n, n_test=args.n_test, seed=args.seed
    )
    start = time.time()
    results = run_experiment(
        config,
        progress=lambda c, m, r: print(f"{c}/{m} rep {r}", file=sys.stderr),
    )
    write_report_csv(results, args.out)
    print(format_report(results))
    print(f"\nwrote {args.out} in {(time.time() - start) / 60:.1f} min")


if __name__ == "__main__":
    main()
