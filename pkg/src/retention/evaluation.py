"""Prediction scoring and the scenario-grid simulation experiment.

The experiment compares two learners on synthetic cohorts across a grid of
censoring and missingness levels:

* "btm" — the stratified Bayesian hazard models plus posterior g-computation;
* "logistic" — a per-pattern logistic regression of the dichotomized
  retention label on the observed covariates and the schedule, with labels
  unobservable due to censoring imputed as not retained.

Both learners are stratified by monitoring pattern; neither sees latent
(masked) covariate values.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import gcomp
from .artifact import PosteriorArtifact
from .dataset import Cohort, RetentionLabel, VisitRecord, retention_label
from .errors import (
    LengthMismatch,
    OneClassOnly,
    RetentionError,
    SingularInformation,
    UnknownStratum,
)
from .sampler import HmcConfig, fit_all_strata
from .simulator import DgpConfig, DgpParams, TruthRecord, fit_logistic, simulate_cohort

CENSORING_LEVELS = ("low", "high")
MISSINGNESS_LEVELS = ("none", "low", "high")
ALL_SCENARIOS = tuple(
    (c, m) for c in CENSORING_LEVELS for m in MISSINGNESS_LEVELS
)


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic, ties half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise OneClassOnly("both outcome classes are required to compute AUC")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def optimal_accuracy(modes, truth: list[TruthRecord]) -> float:
    """Fraction of subjects whose recommended option equals the true optimum."""
    if len(modes) != len(truth):
        raise LengthMismatch(f"{len(modes)} modes vs {len(truth)} truth records")
    return float(np.mean([float(m) == t.optimal for m, t in zip(modes, truth)]))


# ---------------------------------------------------------------------------
# per-method prediction


def _pattern_groups(records) -> dict[tuple[bool, ...], list[int]]:
    groups: dict[tuple[bool, ...], list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.pattern, []).append(i)
    return groups


def _fallback_model(artifact: PosteriorArtifact, cause, schedule, pattern):
    """Exact-pattern model, else the richest fitted model the subject can feed.

    A model whose pattern is a subset of the subject's observed covariates is
    always usable; preferring the largest such subset loses the least
    information when the exact stratum was unoccupied in training.
    """
    try:
        return artifact.model_for(cause, schedule, pattern)
    except UnknownStratum:
        best = None
        for m in artifact.models.values():
            k = m.key
            if k.cause != cause or k.schedule != schedule:
                continue
            if all(not need or have for need, have in zip(k.pattern, pattern)):
                if best is None or sum(k.pattern) > sum(best.key.pattern):
                    best = m
        if best is None:
            raise
        return best


def _design_for(model, records) -> np.ndarray:
    idx = [p for p, used in enumerate(model.key.pattern) if used]
    return np.array([[r.covariates[p] for p in idx] for r in records])


def btm_predict(
    artifact: PosteriorArtifact,
    records: list[VisitRecord],
    delta: float,
    n_sims: int = 100,
    seed: int = 0,
):
    """Posterior-mean retention at the assigned schedule and modal optimum.

    Returns (scores, modes) aligned with ``records``. Within each monitoring
    pattern, one uniform stream is shared across schedule options (common
    random numbers) and the per-draw argmax frequencies give each subject's
    optimal-option PMF; the reported mode breaks ties toward the smaller
    option.
    """
    options = sorted(artifact.schedule_options)
    scores = np.empty(len(records))
    modes = np.empty(len(records))
    config = gcomp.GcompConfig(n_sims=n_sims, seed=seed)
    for g, (pattern, idx) in enumerate(sorted(_pattern_groups(records).items())):
        group = [records[i] for i in idx]
        rng = np.random.default_rng([seed, g])
        u = rng.random((artifact.n_draws, 2, len(group), n_sims))
        psi = np.empty((len(options), artifact.n_draws, len(group)))
        for oi, s in enumerate(options):
            ret = _fallback_model(artifact, 1, s, pattern)
            death = _fallback_model(artifact, 0, s, pattern)
            psi[oi] = gcomp.psi_draws(
                ret, death, _design_for(ret, group), _design_for(death, group),
                s, delta, u, config,
            )
        best = np.argmax(psi, axis=0)  # (A, n_g); first max -> smallest option
        for gi, i in enumerate(idx):
            assigned = options.index(records[i].scheduled_return)
            scores[i] = psi[assigned, :, gi].mean()
            counts = np.bincount(best[:, gi], minlength=len(options))
            modes[i] = options[int(np.argmax(counts))]
    return scores, modes


def _logistic_design(records, pattern, schedules) -> np.ndarray:
    idx = [p for p, used in enumerate(pattern) if used]
    X = np.array([[r.covariates[p] for p in idx] for r in records])
    return np.column_stack([np.ones(len(records)), X, np.asarray(schedules, dtype=float)])


def logistic_predict(
    train: Cohort, records: list[VisitRecord], delta: float, options
):
    """Dichotomized-label logistic baseline, one fit per monitoring pattern.

    Training labels: retained -> 1, everything else (including outcomes
    unobservable due to censoring) -> 0. The schedule enters as one linear
    column, so the fitted optimum is forced to one end of the option grid.
    """
    options = sorted(options)
    fits = {}
    for pattern, idx in _pattern_groups(train.records).items():
        group = [train.records[i] for i in idx]
        y = np.array(
            [
                1.0
                if retention_label(r.waiting_time, r.event_type, r.scheduled_return, delta)
                is RetentionLabel.RETAINED
                else 0.0
                for r in group
            ]
        )
        X = _logistic_design(group, pattern, [r.scheduled_return for r in group])
        try:
            fits[pattern] = fit_logistic(X, y)
        except SingularInformation:
            fits[pattern] = None

    def fit_for(pattern):
        if fits.get(pattern) is not None:
            return pattern, fits[pattern]
        usable = [
            p for p, f in fits.items()
            if f is not None and all(not need or have for need, have in zip(p, pattern))
        ]
        if not usable:
            raise SingularInformation("no usable logistic fit for any sub-pattern")
        p = max(usable, key=sum)
        return p, fits[p]

    scores = np.empty(len(records))
    modes = np.empty(len(records))
    for i, r in enumerate(records):
        pattern, fit = fit_for(r.pattern)
        per_option = np.array(
            [
                1.0 / (1.0 + np.exp(-float(_logistic_design([r], pattern, [s])[0] @ fit.coef)))
                for s in options
            ]
        )
        scores[i] = per_option[options.index(r.scheduled_return)]
        modes[i] = options[int(np.argmax(per_option))]
    return scores, modes


# ---------------------------------------------------------------------------
# scenario grid


@dataclass(frozen=True)
class ExperimentConfig:
    replications: int = 50
    n: int = 500
    n_test: int = 500
    delta: float = 2.0
    seed: int = 0
    intervals: int = 10  # baseline-hazard partition size for fitted models
    thin: int = 4  # posterior-draw thinning before g-computation
    n_sims: int = 100  # simulations per retained draw
    scenarios: tuple = ALL_SCENARIOS
    hmc: HmcConfig = field(
        default_factory=lambda: HmcConfig(
            warmup_iters=300, sampling_iters=300, leapfrog_steps=12, chains=2
        )
    )
    dgp: DgpParams = field(default_factory=DgpParams)


@dataclass
class ScenarioResult:
    censoring: str
    missingness: str
    method: str
    auc_values: list[float]
    accuracy_values: list[float]

    def row(self) -> dict:
        def mean_se(v):
            v = np.asarray(v)
            se = v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0
            return float(v.mean()), float(se)

        auc_m, auc_se = mean_se(self.auc_values)
        acc_m, acc_se = mean_se(self.accuracy_values)
        return {
            "censoring": self.censoring,
            "missingness": self.missingness,
            "method": self.method,
            "replications": len(self.auc_values),
            "auc_mean": auc_m,
            "auc_se": auc_se,
            "accuracy_mean": acc_m,
            "accuracy_se": acc_se,
        }


def run_replication(
    censoring: str, missingness: str, seed: int, config: ExperimentConfig
) -> dict[str, tuple[float, float]]:
    """One simulated train/test split scored by both methods.

    Returns {method: (test AUC, optimal accuracy)}.
    """
    dgp = DgpConfig(
        n=config.n, n_test=config.n_test, missingness=missingness,
        censoring=censoring, delta=config.delta, seed=seed, params=config.dgp,
    )
    train, test, truth = simulate_cohort(dgp)
    labels = np.array([t.label for t in truth])
    out = {}

    hmc = dataclasses.replace(config.hmc, seed=seed)
    artifact = fit_all_strata(train, 1, hmc, U=config.intervals)
    artifact = artifact.thinned(config.thin)
    scores, modes = btm_predict(
        artifact, list(test.records), config.delta, n_sims=config.n_sims, seed=seed
    )
    out["btm"] = (auc(scores, labels), optimal_accuracy(modes, truth))

    scores, modes = logistic_predict(
        train, list(test.records), config.delta, config.dgp.schedule_options
    )
    out["logistic"] = (auc(scores, labels), optimal_accuracy(modes, truth))
    return out


def run_experiment(config: ExperimentConfig, progress=None) -> list[ScenarioResult]:
    results = []
    for si, (censoring, missingness) in enumerate(config.scenarios):
        per_method = {m: ScenarioResult(censoring, missingness, m, [], []) for m in ("btm", "logistic")}
        for r in range(config.replications):
            seed = config.seed + 10_000 * si + r
            try:
                rep = run_replication(censoring, missingness, seed, config)
            except RetentionError as exc:
                raise type(exc)(
                    f"scenario ({censoring}, {missingness}) replicate {r}: {exc}"
                ) from exc
            for method, (a, acc) in rep.items():
                per_method[method].auc_values.append(a)
                per_method[method].accuracy_values.append(acc)
            if progress is not None:
                progress(censoring, missingness, r)
        results.extend(per_method.values())
    return results


def write_report_csv(results: list[ScenarioResult], path) -> None:
    rows = [r.row() for r in results]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def format_report(results: list[ScenarioResult]) -> str:
    """Two-panel text table: test AUC and optimal accuracy per scenario."""
    rows = {(r.censoring, r.missingness, r.method): r.row() for r in results}
    scenarios = sorted({(r.censoring, r.missingness) for r in results})
    methods = sorted({r.method for r in results})
    lines = []
    for panel, key in (("Test AUC", "auc"), ("Optimal accuracy", "accuracy")):
        lines.append(panel)
        header = f"{'censoring':>10} {'missingness':>12}" + "".join(
            f"{m:>18}" for m in methods
        )
        lines.append(header)
        for c, m in scenarios:
            cells = ""
            for method in methods:
                row = rows[(c, m, method)]
                cells += f"  {row[key + '_mean']:.3f} ({row[key + '_se']:.3f})"
            lines.append(f"{c:>10} {m:>12}{cells}")
        lines.append("")
    return "\n".join(lines)
