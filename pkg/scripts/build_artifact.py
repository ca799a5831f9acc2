"""Simulate a cohort, fit the stratified models, and save a posterior artifact.

Produces everything needed to try `retention predict/optimize/curve/serve`
without real data.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from retention.sampler import HmcConfig, fit_all_strata  # noqa: E402
from retention.simulator import (  # noqa: E402
    DgpConfig,
    simulate_cohort,
    write_cohort_csv,
    write_truth_json,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--censoring", default="low", choices=["low", "high"])
    ap.add_argument("--missingness", default="none", choices=["none", "low", "high"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--intervals", type=int, default=10)
    ap.add_argument("--warmup", type=int, default=500)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--out", default="artifact.json")
    ap.add_argument("--data-dir", default=None,
                    help="also write train/test CSVs and the truth sidecar here")
    args = ap.parse_args()

    config = DgpConfig(n=args.n, n_test=args.n, censoring=args.censoring,
                       missingness=args.missingness, seed=args.seed)
    train, test, truth = simulate_cohort(config)
    if args.data_dir:
        out = Path(args.data_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_cohort_csv(train, out / "train.csv")
        write_cohort_csv(test, out / "test.csv")
        write_truth_json(truth, out / "truth.json")

    hmc = HmcConfig(warmup_iters=args.warmup, sampling_iters=args.samples,
                    leapfrog_steps=16, chains=2, seed=args.seed)
    artifact = fit_all_strata(train, 1, hmc, U=args.intervals)
    artifact.save(args.out)
    print(f"wrote {args.out}: {len(artifact.models)} stratum models, "
          f"{artifact.n_draws} draws each")


if __name__ == "__main__":
    main()
