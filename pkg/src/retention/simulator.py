"""Synthetic cohort generator with a ground-truth retention oracle.

The generating process: six covariates (three binary, three continuous), a
multinomial-logistic schedule assignment driven by the four always-observed
covariates, a return time drawn from a mixture of a point mass at the
scheduled week and a covariate-dependent Weibull, and independent Weibull
death and censoring times. Two covariates can be masked with probability
depending only on the always-observed four. Named missingness/censoring
levels map to the fixed constants below, chosen so realized rates hit the
calibration targets (about 20%/40% censoring, 45%/60% any-missingness).

The schedule enters the return-time scale through a per-subject exponent
``c(x)`` on log(s), so which option maximizes retention genuinely varies
across subjects; a model that is additive in the schedule cannot recover
that variation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Cohort, VisitRecord
from .errors import SingularInformation

N_COVARIATES = 6


@dataclass(frozen=True)
class DgpParams:
    """Versioned generating-process constants (format, not fit, to real data)."""

    covariate_names: tuple[str, ...] = ("x1", "x2", "x3", "x4", "x5", "x6")
    binary_idx: tuple[int, ...] = (0, 1, 2)
    binary_probs: tuple[float, ...] = (0.45, 0.5, 0.35)
    maskable_idx: tuple[int, ...] = (2, 5)
    observed_idx: tuple[int, ...] = (0, 1, 3, 4)
    schedule_options: tuple[float, ...] = (2.0, 4.0, 8.0)

    assign_intercepts: tuple[float, ...] = (0.0, 0.2, -0.1)
    assign_coefs: tuple[tuple[float, ...], ...] = (
        (0.3, -0.2, 0.15, 0.1),
        (0.0, 0.1, -0.2, 0.25),
        (-0.25, 0.1, 0.1, -0.3),
    )

    point_mass_weight: float = 0.1
    return_shape: float = 1.3
    return_intercept: float = 1.0
    return_coefs: tuple[float, ...] = (0.15, -0.2, 0.25, 0.1, -0.15, 0.2)
    # exponent on log(schedule) in the return-time scale: c(x) = base + slope*tanh(x4)
    return_logs_base: float = 0.2
    return_logs_slope: float = 1.4

    death_shape: float = 1.1
    death_intercept: float = 4.2
    death_coefs: tuple[float, ...] = (-0.1, 0.1, -0.1, 0.2, 0.0, -0.1)

    censor_shape: float = 1.0
    censor_intercept_low: float = 3.271
    censor_intercept_high: float = 2.063
    censor_coefs: tuple[float, ...] = (0.9, -1.2, 0.6, -0.9)  # on observed covariates
    miss_coefs: tuple[float, ...] = (0.5, -0.4, 0.3, -0.2)
    miss_intercept_low: float = -1.105
    miss_intercept_high: float = -0.548


@dataclass(frozen=True)
class DgpConfig:
    n: int = 500
    n_test: int = 500
    missingness: str = "none"  # none | low | high
    censoring: str = "low"  # low | high
    delta: float = 2.0
    seed: int = 0
    params: DgpParams = field(default_factory=DgpParams)

    def __post_init__(self):
        assert self.missingness in ("none", "low", "high")
        assert self.censoring in ("low", "high")
        assert self.delta > 0


@dataclass(frozen=True)
class TruthRecord:
    subject_id: str
    psi: dict[float, float]  # true retention probability per schedule option
    optimal: float  # argmax of psi, smallest option on ties
    label: int  # realized uncensored retention outcome Y(delta)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _weibull_scale_return(params: DgpParams, X: np.ndarray, s: float) -> np.ndarray:
    c = params.return_logs_base + params.return_logs_slope * np.tanh(X[:, 3])
    return np.exp(params.return_intercept + X @ np.array(params.return_coefs) + c * np.log(s))


def _weibull_scale_death(params: DgpParams, X: np.ndarray) -> np.ndarray:
    return np.exp(params.death_intercept + X @ np.array(params.death_coefs))


def _draw_covariates(params: DgpParams, n: int, rng) -> np.ndarray:
    X = rng.standard_normal((n, N_COVARIATES))
    for i, p in zip(params.binary_idx, params.binary_probs):
        X[:, i] = (rng.random(n) < p).astype(float)
    return X


def _assign_schedules(params: DgpParams, X: np.ndarray, rng) -> np.ndarray:
    obs = X[:, list(params.observed_idx)]
    scores = np.column_stack(
        [a + obs @ np.array(b) for a, b in zip(params.assign_intercepts, params.assign_coefs)]
    )
    probs = np.exp(scores - scores.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(len(X))[:, None]
    idx = (probs.cumsum(axis=1) < u).sum(axis=1)
    return np.array(params.schedule_options)[idx]


def _draw_return_times(
    params: DgpParams, X: np.ndarray, schedules: np.ndarray, rng
) -> np.ndarray:
    n = len(X)
    point = rng.random(n) < params.point_mass_weight
    scale = np.empty(n)
    for s in np.unique(schedules):
        mask = schedules == s
        scale[mask] = _weibull_scale_return(params, X[mask], float(s))
    wv = np.maximum(scale * rng.weibull(params.return_shape, n), 1e-6)
    return np.where(point, schedules, wv)


def _miss_intercept(params: DgpParams, level: str) -> float:
    return params.miss_intercept_low if level == "low" else params.miss_intercept_high


def _draw_monitoring(params: DgpParams, X: np.ndarray, level: str, rng) -> np.ndarray:
    monitoring = np.ones((len(X), N_COVARIATES), dtype=bool)
    if level == "none":
        return monitoring
    obs = X[:, list(params.observed_idx)]
    p_miss = _sigmoid(_miss_intercept(params, level) + obs @ np.array(params.miss_coefs))
    for i in params.maskable_idx:
        monitoring[:, i] = rng.random(len(X)) >= p_miss
    return monitoring


def _records(
    params: DgpParams,
    prefix: str,
    X: np.ndarray,
    monitoring: np.ndarray,
    schedules: np.ndarray,
    waits: np.ndarray,
    events: np.ndarray,
) -> list[VisitRecord]:
    records = []
    for i in range(len(X)):
        cov = np.where(monitoring[i], X[i], np.nan)
        records.append(
            VisitRecord(
                subject_id=f"{prefix}{i:05d}",
                visit_index=1,
                visit_time=0.0,
                scheduled_return=float(schedules[i]),
                waiting_time=float(waits[i]),
                event_type=int(events[i]),
                covariates=cov,
                monitoring=monitoring[i].copy(),
                site="sim",
            )
        )
    return records


def true_retention(
    params: DgpParams,
    x: np.ndarray,
    s: float,
    delta: float,
    n_draws: int | None = None,
    seed: int = 0,
) -> float:
    """Ground-truth retention probability for one fully observed subject.

    With ``n_draws`` set, brute-force Monte Carlo over simulated event pairs;
    otherwise the deterministic mixture integral
    p*S_T(s) + (1-p) * int_0^{s+delta} f_V(w) S_T(w) dw
    evaluated by Gauss-Legendre quadrature.
    """
    if n_draws is not None:
        rng = np.random.default_rng(seed)
        X = np.tile(x, (n_draws, 1))
        wv = _draw_return_times(params, X, np.full(n_draws, s), rng)
        wt = _weibull_scale_death(params, X) * rng.weibull(params.death_shape, n_draws)
        return float(np.mean((wv < wt) & (wv - s <= delta)))
    return float(true_retention_matrix(params, x[None, :], s, delta)[0])


def true_retention_matrix(
    params: DgpParams, X: np.ndarray, s: float, delta: float, n_nodes: int = 200
) -> np.ndarray:
    """Vectorized deterministic truth oracle over a subject matrix."""
    scale_v = _weibull_scale_return(params, X, s)  # (n,)
    scale_t = _weibull_scale_death(params, X)
    kv, kt = params.return_shape, params.death_shape

    def surv_t(w):
        return np.exp(-np.power(w / scale_t[:, None], kt))

    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    hi = s + delta
    w = 0.5 * hi * (nodes + 1.0)  # map [-1,1] -> [0, s+delta]
    z = w[None, :] / scale_v[:, None]
    pdf_v = (kv / scale_v[:, None]) * np.power(z, kv - 1.0) * np.exp(-np.power(z, kv))
    integral = 0.5 * hi * (pdf_v * surv_t(w)) @ weights
    p = params.point_mass_weight
    point_part = p * np.exp(-np.power(s / scale_t, kt))
    return point_part + (1.0 - p) * integral


def simulate_cohort(config: DgpConfig):
    """Draw (train cohort, test cohort, per-test-subject truth records).

    The training cohort is subject to censoring; the test cohort is not, so
    every test label is observed. Truth records carry the oracle retention
    probability under each schedule option for the latent (pre-masking)
    covariates.
    """
    params = config.params
    rng = np.random.default_rng(config.seed)
    options = params.schedule_options

    cohorts = {}
    for role, n in (("train", config.n), ("test", config.n_test)):
        X = _draw_covariates(params, n, rng)
        schedules = _assign_schedules(params, X, rng)
        wv = _draw_return_times(params, X, schedules, rng)
        wt = np.maximum(
            _weibull_scale_death(params, X) * rng.weibull(params.death_shape, n), 1e-6
        )
        if role == "train":
            c0 = (
                params.censor_intercept_low
                if config.censoring == "low"
                else params.censor_intercept_high
            )
            scale_c = np.exp(c0 + X[:, list(params.observed_idx)] @ np.array(params.censor_coefs))
            c = np.maximum(scale_c * rng.weibull(params.censor_shape, n), 1e-6)
        else:
            c = np.full(n, np.inf)
        waits = np.minimum(np.minimum(wv, wt), c)
        events = np.where(waits == wv, 1, np.where(waits == wt, 0, -1))
        monitoring = _draw_monitoring(params, X, config.missingness, rng)
        records = _records(params, role[0] + "_", X, monitoring, schedules, waits, events)
        cohort = Cohort(tuple(records), params.covariate_names, options)
        cohorts[role] = (cohort, X, schedules, wv, wt)

    train = cohorts["train"][0]
    test, X_test, s_test, wv_test, wt_test = cohorts["test"]

    psi = {s: true_retention_matrix(params, X_test, s, config.delta) for s in options}
    stacked = np.column_stack([psi[s] for s in options])  # options are sorted
    optimal = np.array(options)[np.argmax(stacked, axis=1)]
    labels = ((wv_test < wt_test) & (wv_test - s_test <= config.delta)).astype(int)
    truth = [
        TruthRecord(
            subject_id=test.records[i].subject_id,
            psi={s: float(psi[s][i]) for s in options},
            optimal=float(optimal[i]),
            label=int(labels[i]),
        )
        for i in range(config.n_test)
    ]
    return train, test, truth


def write_cohort_csv(cohort: Cohort, path) -> None:
    names = cohort.covariate_names
    header = [
        "subject_id", "visit_index", "visit_time_weeks", "scheduled_return_weeks",
        "waiting_time_weeks", "event_type", "site",
    ] + list(names) + ["m_" + c for c in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in cohort.records:
            row = [
                r.subject_id, r.visit_index, r.visit_time, r.scheduled_return,
                r.waiting_time, r.event_type, r.site,
            ]
            row += ["" if not r.monitoring[p] else repr(float(r.covariates[p]))
                    for p in range(len(names))]
            row += [int(b) for b in r.monitoring]
            writer.writerow(row)


def write_truth_json(truth: list[TruthRecord], path) -> None:
    payload = [
        {
            "subject_id": t.subject_id,
            "psi": {f"{s:g}": p for s, p in t.psi.items()},
            "optimal": t.optimal,
            "label": t.label,
        }
        for t in truth
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh)


def read_truth_json(path) -> list[TruthRecord]:
    with open(path) as fh:
        payload = json.load(fh)
    return [
        TruthRecord(
            subject_id=d["subject_id"],
            psi={float(s): p for s, p in d["psi"].items()},
            optimal=float(d["optimal"]),
            label=int(d["label"]),
        )
        for d in payload
    ]


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    converged: bool
    n_iter: int


def fit_logistic(X: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-8) -> LogisticFit:
    """Logistic-regression MLE by iteratively reweighted least squares."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    for it in range(1, max_iter + 1):
        p = _sigmoid(X @ beta)
        score = X.T @ (y - p)
        if np.max(np.abs(score)) < tol:
            return LogisticFit(beta, True, it)
        w = np.maximum(p * (1.0 - p), 1e-10)
        info = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise SingularInformation(f"information matrix singular at iteration {it}") from exc
        if not np.all(np.isfinite(step)):
            raise SingularInformation(f"non-finite Newton step at iteration {it}")
        beta = beta + step
    return LogisticFit(beta, False, max_iter)


def predict_logistic(fit: LogisticFit, X: np.ndarray) -> np.ndarray:
    return _sigmoid(np.asarray(X, dtype=float) @ fit.coef)
