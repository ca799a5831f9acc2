"""Command-line entry point: simulate | fit | predict | optimize | curve | evaluate | serve.

Flag values resolve as: explicit CLI flag > value under the matching section of
a ``--config`` TOML file > built-in default.  Runtime failures print a
machine-readable JSON error on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .artifact import PosteriorArtifact
from .errors import RetentionError
from .simulator import DgpConfig, simulate_cohort, write_cohort_csv, write_truth_json

RESERVED_COLUMNS = {
    "subject_id",
    "visit_index",
    "visit_time_weeks",
    "scheduled_return_weeks",
    "waiting_time_weeks",
    "event_type",
    "site",
}


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve(args: argparse.Namespace, key: str, default):
    """Flag value if given, else config-file value, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    section = args._config.get(args.command, {})
    if key in section:
        return section[key]
    if key in args._config:
        return args._config[key]
    return default


def _thread_cap(args: argparse.Namespace):
    threads = _resolve(args, "threads", None)
    if threads is None:
        env = os.environ.get("RETENTION_THREADS")
        threads = int(env) if env else None
    if threads is None:
        return None
    import threadpoolctl

    return threadpoolctl.threadpool_limits(limits=int(threads))


def _covariate_names_from_header(path) -> list[str]:
    import csv

    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    return [c for c in header if c not in RESERVED_COLUMNS and not c.startswith("m_")]


def _read_input(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _gcomp_config(args, default_seed=0):
    from .gcomp import GcompConfig

    return GcompConfig(
        n_sims=int(_resolve(args, "n_sims", 1000)),
        seed=int(_resolve(args, "seed", default_seed)),
    )


def _subject_args(payload: dict) -> dict:
    return dict(
        pattern=tuple(bool(b) for b in payload.get("pattern", [])),
        covariates={k: float(v) for k, v in payload.get("covariates", {}).items()},
        site=payload.get("site"),
        prev_waiting=payload.get("prev_waiting"),
        prev_schedule=payload.get("prev_schedule"),
    )


def cmd_simulate(args) -> int:
    scenario = _load_toml(args.scenario)
    config = DgpConfig(
        n=int(scenario.get("n", 500)),
        n_test=int(scenario.get("n_test", 500)),
        missingness=scenario.get("missingness", "none"),
        censoring=scenario.get("censoring", "low"),
        delta=float(scenario.get("delta", 2.0)),
        seed=int(_resolve(args, "seed", scenario.get("seed", 0))),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test, truth = simulate_cohort(config)
    write_cohort_csv(train, out / "train.csv")
    write_cohort_csv(test, out / "test.csv")
    write_truth_json(truth, out / "truth.json")
    print(json.dumps({"out": str(out), "n": config.n, "n_test": config.n_test}))
    return 0


def cmd_fit(args) -> int:
    from .dataset import parse_cohort
    from .sampler import HmcConfig, fit_all_strata

    names = _covariate_names_from_header(args.data)
    cohort = parse_cohort(args.data, names)
    hmc = HmcConfig(
        warmup_iters=int(_resolve(args, "warmup", 1000)),
        sampling_iters=int(_resolve(args, "samples", 2000)),
        leapfrog_steps=int(_resolve(args, "leapfrog", 32)),
        chains=int(_resolve(args, "chains", 4)),
        seed=int(_resolve(args, "seed", 0)),
    )
    artifact = fit_all_strata(
        cohort,
        int(_resolve(args, "visit", 1)),
        hmc,
        U=int(_resolve(args, "intervals", 20)),
        stratify_site=bool(args.strata_site),
    )
    thin = int(_resolve(args, "thin", 1))
    if thin > 1:
        artifact = artifact.thinned(thin)
    artifact.save(args.out)
    print(json.dumps({"out": args.out, "strata": len(artifact.models)}))
    return 0


def cmd_predict(args) -> int:
    from . import gcomp

    artifact = PosteriorArtifact.load(args.artifact)
    payload = _read_input(args.input)
    delta = _resolve(args, "delta", artifact.default_delta)
    subject = _subject_args(payload)
    est = gcomp.retention_probability(
        artifact,
        float(_resolve(args, "schedule", payload.get("schedule", 0.0))),
        subject["pattern"],
        subject["covariates"],
        float(delta),
        _gcomp_config(args),
        site=subject["site"],
        prev_waiting=subject["prev_waiting"],
        prev_schedule=subject["prev_schedule"],
    )
    print(json.dumps(est.to_dict()))
    return 0


def cmd_optimize(args) -> int:
    from . import gcomp

    artifact = PosteriorArtifact.load(args.artifact)
    payload = _read_input(args.input)
    delta = _resolve(args, "delta", artifact.default_delta)
    options = _resolve(args, "options", None)
    if isinstance(options, str):
        options = [float(v) for v in options.split(",")]
    subject = _subject_args(payload)
    result = gcomp.optimal_schedule(
        artifact,
        subject["pattern"],
        subject["covariates"],
        float(delta),
        _gcomp_config(args),
        options=tuple(options) if options else None,
        site=subject["site"],
        prev_waiting=subject["prev_waiting"],
        prev_schedule=subject["prev_schedule"],
    )
    print(json.dumps(result.to_dict()))
    return 0


def cmd_curve(args) -> int:
    from . import gcomp

    artifact = PosteriorArtifact.load(args.artifact)
    payload = _read_input(args.input)
    grid = _resolve(args, "delta_grid", None)
    if isinstance(grid, str):
        grid = [float(v) for v in grid.split(",")]
    if grid is None:
        grid = payload.get("delta_grid", [1.0, 2.0, 4.0, 8.0, 90.0 / 7.0])
    subject = _subject_args(payload)
    curve = gcomp.subdistribution_curve(
        artifact,
        float(_resolve(args, "schedule", payload.get("schedule", 0.0))),
        subject["pattern"],
        subject["covariates"],
        [float(d) for d in grid],
        _gcomp_config(args),
        site=subject["site"],
        prev_waiting=subject["prev_waiting"],
        prev_schedule=subject["prev_schedule"],
    )
    out = [
        {"delta": float(d), **est.to_dict()} for d, est in zip(sorted(grid), curve)
    ]
    print(json.dumps({"curve": out}))
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import (
        ALL_SCENARIOS,
        ExperimentConfig,
        format_report,
        run_experiment,
        write_report_csv,
    )
    from .sampler import HmcConfig

    grid = _load_toml(args.grid) if args.grid else {}
    scenarios = tuple(
        (str(c), str(m)) for c, m in grid.get("scenarios", ALL_SCENARIOS)
    )
    hmc_section = grid.get("hmc", {})
    config = ExperimentConfig(
        replications=int(_resolve(args, "reps", grid.get("replications", 50))),
        n=int(grid.get("n", 500)),
        n_test=int(grid.get("n_test", 500)),
        delta=float(grid.get("delta", 2.0)),
        seed=int(_resolve(args, "seed", grid.get("seed", 0))),
        intervals=int(grid.get("intervals", 10)),
        thin=int(grid.get("thin", 4)),
        n_sims=int(grid.get("n_sims", 100)),
        scenarios=scenarios,
        hmc=HmcConfig(
            warmup_iters=int(hmc_section.get("warmup", 300)),
            sampling_iters=int(hmc_section.get("samples", 300)),
            leapfrog_steps=int(hmc_section.get("leapfrog", 12)),
            chains=int(hmc_section.get("chains", 2)),
        ),
    )

    def progress(censoring, missingness, r):
        print(f"{censoring}/{missingness} rep {r}", file=sys.stderr)

    results = run_experiment(config, progress=progress if args.verbose else None)
    write_report_csv(results, args.out)
    print(format_report(results))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    bind = _resolve(args, "bind", "127.0.0.1:8000")
    host, _, port = bind.rpartition(":")
    serve(args.artifact, host=host or "127.0.0.1", port=int(port))
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML config file; flags override its values")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--threads", type=int,
                   help="cap BLAS parallelism (env RETENTION_THREADS as fallback)")


def _add_subject_flags(p: argparse.ArgumentParser):
    p.add_argument("--artifact", required=True, help="posterior artifact path")
    p.add_argument("--input", required=True,
                   help="subject JSON: covariates, pattern, schedule, site")
    p.add_argument("--delta", type=float, help="retention window in weeks")
    p.add_argument("--n-sims", dest="n_sims", type=int,
                   help="Monte Carlo simulations per posterior draw")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retention",
        description="Stratified retention models: simulate, fit, predict, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort from a scenario file")
    p.add_argument("--scenario", required=True, help="scenario TOML file")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit stratified hazard models and save an artifact")
    p.add_argument("--data", required=True, help="cohort CSV")
    p.add_argument("--visit", type=int, help="visit index to model (default 1)")
    p.add_argument("--strata-site", action="store_true", help="stratify by site")
    p.add_argument("--out", required=True, help="artifact output path")
    p.add_argument("--intervals", type=int, help="baseline-hazard intervals (default 20)")
    p.add_argument("--warmup", type=int, help="HMC warmup iterations")
    p.add_argument("--samples", type=int, help="HMC sampling iterations")
    p.add_argument("--leapfrog", type=int, help="leapfrog steps per trajectory")
    p.add_argument("--chains", type=int, help="number of HMC chains")
    p.add_argument("--thin", type=int, help="keep every k-th posterior draw")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="retention probability for one subject")
    _add_subject_flags(p)
    p.add_argument("--schedule", type=float, help="scheduled return time in weeks")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("optimize", help="posterior distribution of the best schedule")
    _add_subject_flags(p)
    p.add_argument("--options", help="comma-separated schedule options (default 2,4,8)")
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("curve", help="retention probability over a grid of windows")
    _add_subject_flags(p)
    p.add_argument("--schedule", type=float, help="scheduled return time in weeks")
    p.add_argument("--delta-grid", dest="delta_grid",
                   help="comma-separated window grid in weeks")
    _add_common(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("evaluate", help="run the simulation experiment grid")
    p.add_argument("--grid", help="experiment grid TOML file")
    p.add_argument("--reps", type=int, help="replications per scenario (default 50)")
    p.add_argument("--out", required=True, help="report CSV output path")
    p.add_argument("--verbose", action="store_true", help="per-replication progress")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="serve predictions over HTTP")
    p.add_argument("--artifact", required=True, help="posterior artifact path")
    p.add_argument("--bind", help="addr:port to listen on (default 127.0.0.1:8000)")
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args._config = _load_toml(args.config) if getattr(args, "config", None) else {}
    limit = None
    try:
        limit = _thread_cap(args)
        return args.func(args)
    except RetentionError as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "detail": str(exc)}), file=sys.stderr)
        return 1
    finally:
        if limit is not None:
            limit.unregister()


if __name__ == "__main__":
    sys.exit(main())
