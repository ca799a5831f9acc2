"""Stratified piecewise-constant proportional-hazards model.

One model per (stratum, cause). The baseline hazard is constant on each of U
equal-width intervals; interval log-rates carry a first-order autoregressive
Gaussian prior shrinking toward a constant hazard. The sampler works in an
unconstrained vector: non-centered innovations for the log-rates, raw
coefficients, and transformed hyperparameters (eta, logit rho, log sigma).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyStratum, NonFiniteValue, NonPositiveTime

#: prior variance of each regression coefficient (log hazard-ratio scale)
COEF_VAR = 3.0
#: prior variance of the process mean eta
ETA_VAR = 25.0
#: half-normal scale of the innovation sd sigma
SIGMA_SCALE = 1.0


@dataclass(frozen=True)
class Partition:
    """U equal-width intervals covering (0, max observed waiting time]."""

    cutpoints: np.ndarray  # length U + 1, cutpoints[0] == 0

    @property
    def size(self) -> int:
        return len(self.cutpoints) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.cutpoints)

    @property
    def end(self) -> float:
        return float(self.cutpoints[-1])

    def lookup(self, w) -> np.ndarray:
        """Interval index for each time; times past the end map to the last
        interval (constant-rate extrapolation)."""
        idx = np.searchsorted(self.cutpoints, w, side="right") - 1
        return np.clip(idx, 0, self.size - 1)


@dataclass(frozen=True)
class HazardParams:
    log_theta: np.ndarray
    beta: np.ndarray
    eta: float = 0.0
    rho: float = 0.5
    sigma: float = 0.5


@dataclass(frozen=True)
class StratumData:
    """Aligned arrays for one stratum: design matrix, waiting times, and the
    per-cause event indicators. A censored record is a zero in both."""

    X: np.ndarray
    w: np.ndarray
    d_return: np.ndarray
    d_death: np.ndarray

    def __post_init__(self):
        n = len(self.w)
        if not (self.X.shape[0] == n == len(self.d_return) == len(self.d_death)):
            raise DimensionMismatch("stratum arrays are not aligned")

    def for_cause(self, cause: int) -> "CauseData":
        d = self.d_return if cause == 1 else self.d_death
        return CauseData(self.X, self.w, d)


@dataclass(frozen=True)
class CauseData:
    X: np.ndarray
    w: np.ndarray
    d: np.ndarray


def build_partition(w: np.ndarray, U: int) -> Partition:
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        raise EmptyStratum("cannot build a partition from an empty stratum")
    assert U >= 1
    return Partition(np.linspace(0.0, float(w.max()), U + 1))


def _baseline_overlap(partition: Partition, w: np.ndarray) -> np.ndarray:
    """(n, U) matrix of overlap lengths of [0, w_i] with each interval, with
    the last interval open-ended (extrapolation at its rate)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    cuts = partition.cutpoints
    widths = partition.widths.copy()
    widths[-1] = np.inf
    return np.clip(w[:, None] - cuts[None, :-1], 0.0, widths[None, :])


def hazard_at(params: HazardParams, partition: Partition, w, x: np.ndarray) -> float:
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(w_arr <= 0):
        raise NonPositiveTime(f"hazard requires w > 0, got {w}")
    rate = np.exp(params.log_theta[partition.lookup(w_arr)] + x @ params.beta)
    return float(rate[0]) if np.isscalar(w) else rate


def cumulative_hazard(params: HazardParams, partition: Partition, w, x: np.ndarray) -> float:
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(w_arr <= 0):
        raise NonPositiveTime(f"cumulative hazard requires w > 0, got {w}")
    base = _baseline_overlap(partition, w_arr) @ np.exp(params.log_theta)
    out = base * np.exp(x @ params.beta)
    return float(out[0]) if np.isscalar(w) else out


def log_likelihood(
    params_return: HazardParams,
    params_death: HazardParams,
    partition: Partition,
    data: StratumData,
) -> float:
    """Competing-risks log likelihood: each event contributes its own cause's
    log hazard, and every record contributes minus both cumulative hazards."""
    total = 0.0
    for params, d in ((params_return, data.d_return), (params_death, data.d_death)):
        lin = data.X @ params.beta
        log_haz = params.log_theta[partition.lookup(data.w)] + lin
        base = _baseline_overlap(partition, data.w) @ np.exp(params.log_theta)
        total += float(d @ log_haz - np.exp(lin) @ base)
    return total


# ---------------------------------------------------------------------------
# prior


def log_theta_from(eps: np.ndarray, eta: float, rho: float, sigma: float) -> np.ndarray:
    """Reconstruct log-rates from standard-normal innovations (non-centered)."""
    U = len(eps)
    lt = np.empty(U)
    lt[0] = eta + sigma * eps[0]
    for u in range(1, U):
        lt[u] = eta * (1.0 - rho) + rho * lt[u - 1] + sigma * eps[u]
    return lt


def sample_prior_log_theta(U: int, eta: float, rho: float, sigma: float, n: int, rng) -> np.ndarray:
    """n prior draws of the log-rate vector, shape (n, U)."""
    eps = rng.standard_normal((n, U))
    out = np.empty((n, U))
    out[:, 0] = eta + sigma * eps[:, 0]
    for u in range(1, U):
        out[:, u] = eta * (1.0 - rho) + rho * out[:, u - 1] + sigma * eps[:, u]
    return out


def log_prior(params: HazardParams, coef_var: float = COEF_VAR) -> float:
    """Joint prior density of one model's parameters, evaluated on the
    unconstrained scale (logit rho, log sigma Jacobians included)."""
    lt, eta, rho, sigma = params.log_theta, params.eta, params.rho, params.sigma
    resid = np.empty_like(lt)
    resid[0] = lt[0] - eta
    resid[1:] = lt[1:] - (eta * (1.0 - rho) + rho * lt[:-1])
    half_log_2pi = 0.5 * np.log(2.0 * np.pi)
    lp = -0.5 * np.sum(resid**2) / sigma**2 - len(lt) * (np.log(sigma) + half_log_2pi)
    lp += -0.5 * np.sum(params.beta**2) / coef_var - len(params.beta) * (
        0.5 * np.log(coef_var) + half_log_2pi
    )
    lp += -0.5 * eta**2 / ETA_VAR - 0.5 * np.log(ETA_VAR) - half_log_2pi
    # half-normal(SIGMA_SCALE) on sigma plus the log-sigma Jacobian
    lp += (
        0.5 * np.log(2.0 / np.pi)
        - np.log(SIGMA_SCALE)
        - 0.5 * sigma**2 / SIGMA_SCALE**2
        + np.log(sigma)
    )
    lp += np.log(rho) + np.log1p(-rho)  # uniform(0,1) Jacobian
    return float(lp)


# ---------------------------------------------------------------------------
# unconstrained parameterization for the sampler


def dim(U: int, P: int) -> int:
    return U + P + 3


def unpack(z: np.ndarray, U: int, P: int):
    eps = z[:U]
    beta = z[U : U + P]
    eta = z[U + P]
    rho = 1.0 / (1.0 + np.exp(-z[U + P + 1]))
    sigma = np.exp(z[U + P + 2])
    return eps, beta, eta, rho, sigma


def params_from_unconstrained(z: np.ndarray, U: int, P: int) -> HazardParams:
    eps, beta, eta, rho, sigma = unpack(z, U, P)
    return HazardParams(
        log_theta=log_theta_from(eps, eta, rho, sigma),
        beta=np.array(beta),
        eta=float(eta),
        rho=float(rho),
        sigma=float(sigma),
    )


def pack_initial(U: int, P: int, crude_log_rate: float) -> np.ndarray:
    """Data-scaled starting point: flat baseline at the crude rate."""
    z = np.zeros(dim(U, P))
    z[U + P] = crude_log_rate  # eta
    z[U + P + 1] = 0.0  # logit rho -> 0.5
    z[U + P + 2] = np.log(0.5)  # log sigma
    return z


@dataclass
class PreparedCause:
    """Per-cause sufficient pieces precomputed once per fit."""

    X: np.ndarray
    w: np.ndarray
    d: np.ndarray
    overlap: np.ndarray  # (n, U) baseline overlap lengths
    events_per_interval: np.ndarray  # (U,) event counts by interval
    score_events: np.ndarray  # (P,) X' d

    @classmethod
    def build(cls, data: CauseData, partition: Partition) -> "PreparedCause":
        overlap = _baseline_overlap(partition, data.w)
        idx = partition.lookup(data.w)
        events = np.bincount(idx, weights=data.d, minlength=partition.size)
        return cls(
            X=data.X,
            w=data.w,
            d=data.d,
            overlap=overlap,
            events_per_interval=events,
            score_events=data.X.T @ data.d,
        )


def log_posterior_and_grad(
    z: np.ndarray, prepared: PreparedCause, U: int, coef_var: float = COEF_VAR
) -> tuple[float, np.ndarray]:
    """Exact log posterior and analytic gradient in the unconstrained space.

    Returns -inf (with a zero gradient) when the parameters overflow, which
    the sampler treats as a rejected trajectory.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NonFiniteValue("non-finite input to log_posterior_and_grad")
    P = prepared.X.shape[1]
    eps, beta, eta, rho, sigma = unpack(z, U, P)
    lt = log_theta_from(eps, eta, rho, sigma)

    with np.errstate(over="ignore"):
        theta = np.exp(lt)
        lin = prepared.X @ beta
        risk = np.exp(lin)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(risk))):
        return -np.inf, np.zeros_like(z)

    base = prepared.overlap @ theta  # (n,) baseline cumulative hazard
    # likelihood
    ll = (
        float(prepared.events_per_interval @ lt)
        + float(prepared.d @ lin)
        - float(risk @ base)
    )

    # gradient wrt log_theta and beta
    g_lt = prepared.events_per_interval - theta * (prepared.overlap.T @ risk)
    g_beta = prepared.score_events - prepared.X.T @ (risk * base)

    # prior on the unconstrained vector
    logit_rho = z[U + P + 1]
    log_sigma = z[U + P + 2]
    with np.errstate(divide="ignore"):
        lp = (
            ll
            - 0.5 * float(eps @ eps)
            - 0.5 * float(beta @ beta) / coef_var
            - 0.5 * eta**2 / ETA_VAR
            - 0.5 * sigma**2 / SIGMA_SCALE**2
            + log_sigma
            + np.log(rho)
            + np.log1p(-rho)
        )
    if not np.isfinite(lp):
        return -np.inf, np.zeros_like(z)

    # back-propagate g_lt through the AR recursion: a_u = g_u + rho * a_{u+1}
    a = np.empty(U)
    a[-1] = g_lt[-1]
    for u in range(U - 2, -1, -1):
        a[u] = g_lt[u] + rho * a[u + 1]

    grad = np.empty_like(z)
    grad[:U] = sigma * a - eps
    grad[U : U + P] = g_beta - beta / coef_var
    grad[U + P] = a[0] + (1.0 - rho) * np.sum(a[1:]) - eta / ETA_VAR
    d_rho = float(a[1:] @ (lt[:-1] - eta)) if U > 1 else 0.0
    grad[U + P + 1] = d_rho * rho * (1.0 - rho) + (1.0 - 2.0 * rho)
    grad[U + P + 2] = float(a @ eps) * sigma - sigma**2 / SIGMA_SCALE**2 + 1.0
    return float(lp), grad
