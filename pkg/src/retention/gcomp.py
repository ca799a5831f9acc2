"""Posterior g-computation over stored hazard draws.

For each posterior draw, waiting times to return and to death are simulated
from the two cause-specific hazards; their minimum and its type give the
simulated first event, and retention is the fraction of simulations whose
first event is a return within delta weeks of the schedule. Common random
numbers are reused across schedule options so per-draw comparisons (and the
argmax in the optimal-schedule rule) are not blurred by simulation noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .artifact import PosteriorArtifact, StratumModel, build_predictor
from .errors import NonPositiveDelta

#: horizon defaults to this multiple of the partition end
HORIZON_FACTOR = 2.0


@dataclass(frozen=True)
class GcompConfig:
    n_sims: int = 1000  # Monte Carlo simulations per posterior draw
    horizon: float | None = None  # weeks; None -> HORIZON_FACTOR * partition end
    seed: int = 0

    def __post_init__(self):
        assert self.n_sims >= 1


@dataclass
class RetentionEstimate:
    """Posterior draws of one subject's retention probability."""

    draws: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.draws.mean())

    @property
    def median(self) -> float:
        return float(np.percentile(self.draws, 50))

    @property
    def ci(self) -> tuple[float, float]:
        return (
            float(np.percentile(self.draws, 2.5)),
            float(np.percentile(self.draws, 97.5)),
        )

    @property
    def ci_width(self) -> float:
        lo, hi = self.ci
        return hi - lo

    def to_dict(self) -> dict:
        lo, hi = self.ci
        return {"psi_mean": self.mean, "psi_median": self.median, "psi_ci": [lo, hi]}


@dataclass
class OptimalSchedulePMF:
    pmf: dict[float, float]
    mode: float
    triangle: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "pmf": {f"{s:g}": p for s, p in self.pmf.items()},
            "mode": self.mode,
            "triangle": list(self.triangle),
        }


def _horizon_for(model: StratumModel, config: GcompConfig) -> float:
    if config.horizon is not None:
        return max(config.horizon, model.partition.end)
    return HORIZON_FACTOR * model.partition.end


def _invert_baseline(log_theta: np.ndarray, cutpoints: np.ndarray, horizon: float, targets):
    """Exact inverse of the baseline cumulative hazard.

    ``targets`` holds required cumulative-hazard levels; returns event times,
    with +inf marking levels not reached by ``horizon``. The last interval's
    rate extends from the partition end to the horizon.
    """
    theta = np.exp(log_theta)
    starts = np.concatenate([cutpoints[:-1], [cutpoints[-1]]])
    rates = np.concatenate([theta, [theta[-1]]])
    ends = np.concatenate([cutpoints[1:], [max(horizon, cutpoints[-1])]])
    cum_ends = np.cumsum(rates * (ends - starts))
    cum_starts = np.concatenate([[0.0], cum_ends[:-1]])
    idx = np.searchsorted(cum_ends, targets, side="left")
    capped = np.minimum(idx, len(rates) - 1)
    times = starts[capped] + (targets - cum_starts[capped]) / rates[capped]
    return np.where(idx >= len(rates), np.inf, times)


def sample_waiting_time(params, partition, x: np.ndarray, horizon: float, rng) -> float:
    """One draw of the waiting time via exact inverse-CDF sampling.

    Returns +inf when the survival function at ``horizon`` exceeds the drawn
    uniform (the event falls beyond the horizon).
    """
    u = rng.random()
    scale = float(np.exp(x @ params.beta))
    target = -np.log(u) / scale
    return float(
        _invert_baseline(params.log_theta, partition.cutpoints, horizon, np.array([target]))[0]
    )


def psi_draws(
    ret_model: StratumModel,
    death_model: StratumModel,
    x_ret: np.ndarray,
    x_death: np.ndarray,
    schedule: float,
    delta: float,
    uniforms: np.ndarray,
    config: GcompConfig,
) -> np.ndarray:
    """Per-posterior-draw retention probabilities for a batch of subjects.

    ``x_ret``/``x_death`` have shape (n, P_cause); ``uniforms`` has shape
    (A, 2, n, B) and may be shared across schedule options (common random
    numbers). Returns an (A, n) matrix.
    """
    if not delta > 0:
        raise NonPositiveDelta(f"delta must be > 0, got {delta}")
    A = ret_model.n_draws
    n = x_ret.shape[0]
    h_ret = _horizon_for(ret_model, config)
    h_death = _horizon_for(death_model, config)
    out = np.empty((A, n))
    scale_ret = np.exp(x_ret @ ret_model.beta.T)  # (n, A)
    scale_death = np.exp(x_death @ death_model.beta.T)
    for a in range(A):
        t_ret = -np.log(uniforms[a, 0]) / scale_ret[:, a][:, None]  # (n, B)
        t_death = -np.log(uniforms[a, 1]) / scale_death[:, a][:, None]
        w_ret = _invert_baseline(
            ret_model.log_theta[a], ret_model.cutpoints, h_ret, t_ret
        )
        w_death = _invert_baseline(
            death_model.log_theta[a], death_model.cutpoints, h_death, t_death
        )
        retained = (w_ret < w_death) & (w_ret - schedule <= delta)
        out[a] = retained.mean(axis=1)
    return out


def _uniforms(config: GcompConfig, A: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    return rng.random((A, 2, n, config.n_sims))


def _predictors(
    artifact: PosteriorArtifact,
    schedule: float,
    pattern: tuple[bool, ...],
    site,
    covariates: dict,
    prev_waiting,
    prev_schedule,
):
    ret_model = artifact.model_for(1, schedule, pattern, site)
    death_model = artifact.model_for(0, schedule, pattern, site)
    x_ret = build_predictor(
        ret_model, covariates, artifact.covariate_names, prev_waiting, prev_schedule
    )
    x_death = build_predictor(
        death_model, covariates, artifact.covariate_names, prev_waiting, prev_schedule
    )
    return ret_model, death_model, x_ret, x_death


def retention_probability(
    artifact: PosteriorArtifact,
    schedule: float,
    pattern: tuple[bool, ...],
    covariates: dict,
    delta: float,
    config: GcompConfig,
    site: str | None = None,
    prev_waiting: float | None = None,
    prev_schedule: float | None = None,
) -> RetentionEstimate:
    ret_model, death_model, x_ret, x_death = _predictors(
        artifact, schedule, pattern, site, covariates, prev_waiting, prev_schedule
    )
    u = _uniforms(config, artifact.n_draws, 1)
    draws = psi_draws(
        ret_model, death_model, x_ret[None, :], x_death[None, :], schedule, delta, u, config
    )
    return RetentionEstimate(draws[:, 0])


def optimal_schedule(
    artifact: PosteriorArtifact,
    pattern: tuple[bool, ...],
    covariates: dict,
    delta: float,
    config: GcompConfig,
    options=None,
    site: str | None = None,
    prev_waiting: float | None = None,
    prev_schedule: float | None = None,
) -> OptimalSchedulePMF:
    """Posterior PMF of the retention-maximizing schedule option.

    Per draw, Psi is computed under every option with shared uniforms, and
    the argmax (smallest option on ties) is recorded; the PMF is the
    frequency of each option across draws.
    """
    options = sorted(artifact.schedule_options if options is None else options)
    u = _uniforms(config, artifact.n_draws, 1)
    psi = np.empty((len(options), artifact.n_draws))
    for i, s in enumerate(options):
        ret_model, death_model, x_ret, x_death = _predictors(
            artifact, s, pattern, site, covariates, prev_waiting, prev_schedule
        )
        psi[i] = psi_draws(
            ret_model, death_model, x_ret[None, :], x_death[None, :], s, delta, u, config
        )[:, 0]
    best = np.argmax(psi, axis=0)  # first max -> smallest option on ties
    counts = np.bincount(best, minlength=len(options))
    pmf = {s: counts[i] / len(best) for i, s in enumerate(options)}
    mode = options[int(np.argmax(counts))]
    triangle = (pmf[options[0]], pmf[options[1]]) if len(options) >= 2 else (pmf[options[0]], 0.0)
    return OptimalSchedulePMF(pmf=pmf, mode=mode, triangle=triangle)


def subdistribution_curve(
    artifact: PosteriorArtifact,
    schedule: float,
    pattern: tuple[bool, ...],
    covariates: dict,
    delta_grid,
    config: GcompConfig,
    site: str | None = None,
    prev_waiting: float | None = None,
    prev_schedule: float | None = None,
) -> list[RetentionEstimate]:
    """Retention estimates across a grid of delay tolerances.

    One simulated (waiting time, event type) set per posterior draw is
    reused for every grid point, so each draw's curve is nondecreasing.
    """
    delta_grid = np.asarray(sorted(delta_grid), dtype=float)
    if np.any(delta_grid <= 0):
        raise NonPositiveDelta("all grid deltas must be > 0")
    ret_model, death_model, x_ret, x_death = _predictors(
        artifact, schedule, pattern, site, covariates, prev_waiting, prev_schedule
    )
    A = artifact.n_draws
    u = _uniforms(config, A, 1)[:, :, 0, :]  # (A, 2, B)
    h_ret = _horizon_for(ret_model, config)
    h_death = _horizon_for(death_model, config)
    scale_ret = np.exp(ret_model.beta @ x_ret)  # (A,)
    scale_death = np.exp(death_model.beta @ x_death)
    draws = np.empty((A, len(delta_grid)))
    for a in range(A):
        w_ret = _invert_baseline(
            ret_model.log_theta[a], ret_model.cutpoints, h_ret, -np.log(u[a, 0]) / scale_ret[a]
        )
        w_death = _invert_baseline(
            death_model.log_theta[a],
            death_model.cutpoints,
            h_death,
            -np.log(u[a, 1]) / scale_death[a],
        )
        return_first = w_ret < w_death
        delay = w_ret - schedule
        draws[a] = [(return_first & (delay <= d)).mean() for d in delta_grid]
    return [RetentionEstimate(draws[:, t]) for t in range(len(delta_grid))]


def triage_quadrants(estimates: list[RetentionEstimate]) -> list[str]:
    """Two-letter quadrant labels (mean level, uncertainty level) per subject.

    Thresholds sit at the empirical averages of the posterior means and of
    the credible-interval widths; values on a threshold count as high.
    """
    assert estimates, "empty estimate collection"
    means = np.array([e.mean for e in estimates])
    widths = np.array([e.ci_width for e in estimates])
    mean_thresh = means.mean()
    width_thresh = widths.mean()
    return [
        ("H" if m >= mean_thresh else "L") + ("H" if w >= width_thresh else "L")
        for m, w in zip(means, widths)
    ]
