"""Hamiltonian Monte Carlo for the stratum-cause hazard models.

Plain HMC with a fixed leapfrog count: step size is tuned during warmup by
dual averaging toward a target acceptance rate, and a diagonal mass matrix
is estimated from the middle of the warmup window. Each (stratum, cause)
model is fitted independently.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import hazard_model as hm
from .artifact import PosteriorArtifact, StratumModel
from .dataset import (
    EVENT_DEATH,
    EVENT_RETURN,
    Cohort,
    StratumKey,
    derive_strata,
    design_matrix,
)
from .errors import AllDivergent, EmptyStratum, TooFewChains

#: strata with fewer return events than this are flagged low-information
MIN_EVENTS_FLAG = 25

# dual-averaging constants (Hoffman & Gelman 2014); gamma is damped relative
# to the usual 0.05 because single-trajectory acceptance is noisy under
# fixed-length HMC; 0.05 leaves the step oscillating across the flat part of
# the acceptance curve and biases the adapted rate upward
DA_GAMMA = 0.15
DA_T0 = 10.0
DA_KAPPA = 0.75

#: relative step-size jitter per iteration; breaks fixed-length resonances
STEP_JITTER = 0.2


@dataclass(frozen=True)
class HmcConfig:
    warmup_iters: int = 1000
    sampling_iters: int = 2000
    leapfrog_steps: int = 32
    target_accept: float = 0.8
    chains: int = 4
    seed: int = 0
    max_energy_error: float = 1000.0

    def __post_init__(self):
        assert self.warmup_iters > 0 and self.sampling_iters > 0
        assert self.leapfrog_steps > 0 and self.chains > 0
        assert 0.0 < self.target_accept < 1.0


@dataclass
class HmcResult:
    draws: np.ndarray  # (chains, sampling_iters, dim)
    accept_rate: np.ndarray  # (chains,)
    divergences: np.ndarray  # (chains,)
    step_size: np.ndarray  # (chains,)

    @property
    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])


def _leapfrog(target, z, p, grad, step, inv_mass, steps):
    # overflow inside a diverging trajectory is expected and handled by the
    # finiteness checks, so keep numpy quiet about it
    with np.errstate(over="ignore", invalid="ignore"):
        p = p + 0.5 * step * grad
        for i in range(steps):
            z = z + step * inv_mass * p
            if not np.all(np.isfinite(z)):
                return z, p, -np.inf, grad
            lp, grad = target(z)
            if not np.isfinite(lp):
                return z, p, lp, grad
            p = p + (step if i < steps - 1 else 0.5 * step) * grad
        return z, p, lp, grad


def _find_initial_step(target, z, grad, lp, inv_mass, rng, steps=1):
    """Crudely bracket a step size giving ~50% acceptance."""
    step = 0.1

    def energy_gain(s):
        p = rng.standard_normal(len(z)) / np.sqrt(inv_mass)
        h0 = lp - 0.5 * float(p * inv_mass @ p)
        z1, p1, lp1, _ = _leapfrog(target, z, p, grad, s, inv_mass, steps)
        if not np.isfinite(lp1):
            return -np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            return lp1 - 0.5 * float(p1 * inv_mass @ p1) - h0

    direction = 1.0 if energy_gain(step) > np.log(0.5) else -1.0
    for _ in range(50):
        step *= 2.0**direction
        if direction * energy_gain(step) < direction * np.log(0.5):
            break
    return step


def _run_chain(target, init, config: HmcConfig, rng: np.random.Generator):
    dim = len(init)
    z = np.array(init, dtype=float)
    lp, grad = target(z)
    if not np.isfinite(lp):
        raise AllDivergent("target is not finite at the initial point")

    inv_mass = np.ones(dim)
    warmup = config.warmup_iters
    mass_window_start = warmup // 2
    mass_update_at = max(int(0.75 * warmup), mass_window_start + 2)
    window: list[np.ndarray] = []

    step = _find_initial_step(target, z, grad, lp, inv_mass, rng, config.leapfrog_steps)
    mu = np.log(10.0 * step)
    log_step_bar = np.log(step)
    h_bar = 0.0
    da_iter = 0

    draws = np.empty((config.sampling_iters, dim))
    accepts = 0
    divergences = 0
    any_accept_warmup = False

    total = warmup + config.sampling_iters
    for m in range(total):
        adapting = m < warmup
        step_m = step * rng.uniform(1.0 - STEP_JITTER, 1.0 + STEP_JITTER)
        p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
        h0 = lp - 0.5 * float(p0 * inv_mass @ p0)
        z1, p1, lp1, grad1 = _leapfrog(target, z, p0, grad, step_m, inv_mass, config.leapfrog_steps)
        if np.isfinite(lp1):
            with np.errstate(over="ignore", invalid="ignore"):
                h1 = lp1 - 0.5 * float(p1 * inv_mass @ p1)
            delta_h = h1 - h0
        else:
            delta_h = -np.inf
        diverged = not np.isfinite(delta_h) or abs(delta_h) > config.max_energy_error
        if diverged:
            divergences += 1
            alpha = 0.0
        else:
            alpha = min(1.0, float(np.exp(min(delta_h, 0.0))))
            if np.log(rng.random()) < delta_h:
                z, lp, grad = z1, lp1, grad1
                if adapting:
                    any_accept_warmup = True

        if adapting:
            da_iter += 1
            frac = 1.0 / (da_iter + DA_T0)
            h_bar = (1.0 - frac) * h_bar + frac * (config.target_accept - alpha)
            log_step = mu - np.sqrt(da_iter) / DA_GAMMA * h_bar
            eta = da_iter ** (-DA_KAPPA)
            log_step_bar = eta * log_step + (1.0 - eta) * log_step_bar
            step = float(np.exp(log_step))
            if mass_window_start <= m < mass_update_at:
                window.append(z.copy())
            if m == mass_update_at - 1 and len(window) >= 2:
                arr = np.asarray(window)
                n = arr.shape[0]
                var = arr.var(axis=0, ddof=1)
                var = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                inv_mass = var
                lp, grad = target(z)
                step = _find_initial_step(target, z, grad, lp, inv_mass, rng, config.leapfrog_steps)
                mu = np.log(10.0 * step)
                log_step_bar = np.log(step)
                h_bar = 0.0
                da_iter = 0
            if m == warmup - 1:
                if not any_accept_warmup:
                    raise AllDivergent("no warmup trajectory was accepted")
                step = float(np.exp(log_step_bar))
        else:
            draws[m - warmup] = z
            accepts += alpha

    return draws, accepts / config.sampling_iters, divergences, step


def hmc_sample(target, init: np.ndarray, config: HmcConfig, seed=None) -> HmcResult:
    """Run ``config.chains`` independent chains and stack their draws.

    ``seed`` may be an int or a numpy SeedSequence; the per-chain streams are
    spawned from it, so results are reproducible given (seed, config, data).
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(
        config.seed if seed is None else seed
    )
    children = root.spawn(config.chains)
    draws, rates, divs, steps = [], [], [], []
    for chain_seq in children:
        rng = np.random.default_rng(chain_seq)
        d, rate, div, step = _run_chain(target, init, config, rng)
        draws.append(d)
        rates.append(rate)
        divs.append(div)
        steps.append(step)
    return HmcResult(
        draws=np.asarray(draws),
        accept_rate=np.asarray(rates),
        divergences=np.asarray(divs),
        step_size=np.asarray(steps),
    )


# ---------------------------------------------------------------------------
# diagnostics


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    x = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    return acov


def diagnostics(chain_draws: np.ndarray) -> dict[str, np.ndarray]:
    """Split R-hat and effective sample size per parameter.

    Input shape (chains, iters, dim) with at least 2 chains. Parameters with
    (near-)zero variance are flagged with NaN R-hat and zero ESS.
    """
    chain_draws = np.asarray(chain_draws, dtype=float)
    if chain_draws.ndim != 3 or chain_draws.shape[0] < 2:
        raise TooFewChains("diagnostics requires draws from at least 2 chains")
    c, n, dim = chain_draws.shape
    half = n // 2
    split = chain_draws[:, : 2 * half].reshape(c * 2, half, dim)

    means = split.mean(axis=1)
    variances = split.var(axis=1, ddof=1)
    w = variances.mean(axis=0)
    b = half * means.var(axis=0, ddof=1)
    degenerate = w < 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        var_plus = (half - 1) / half * w + b / half
        rhat = np.sqrt(var_plus / w)
    rhat[degenerate] = np.nan

    ess = np.zeros(dim)
    for k in range(dim):
        if degenerate[k]:
            continue
        acov = np.zeros(half)
        for s in range(2 * c):
            acov += _autocovariance(split[s, :, k])
        acov /= 2 * c
        rho = 1.0 - (w[k] - acov) / var_plus[k]
        # Geyer initial monotone positive sequence of paired autocorrelations
        pair_sum = 0.0
        prev_pair = np.inf
        t = 0
        while t + 1 < half:
            pair = rho[t] + rho[t + 1]
            if pair < 0:
                break
            pair = min(pair, prev_pair)
            prev_pair = pair
            pair_sum += pair
            t += 2
        tau = max(-1.0 + 2.0 * pair_sum, 1e-12)
        ess[k] = (2 * c * half) / max(tau, 1.0 / (2 * c * half))
    return {"rhat": rhat, "ess": ess}


# ---------------------------------------------------------------------------
# fitting all strata


def _key_entropy(key: StratumKey) -> int:
    digest = hashlib.sha256(key.canonical().encode()).digest()
    return int.from_bytes(digest[:8], "big")


def fit_stratum_cause(
    records,
    key: StratumKey,
    covariate_names,
    config: HmcConfig,
    U: int = 20,
    spline_covariates: tuple[str, ...] = (),
) -> StratumModel:
    if not records:
        raise EmptyStratum(f"no records for stratum {key.canonical()}")
    X, names, specs = design_matrix(list(records), tuple(covariate_names), spline_covariates)
    w = np.array([r.waiting_time for r in records])
    d = np.array([1.0 if r.event_type == key.cause else 0.0 for r in records])
    partition = hm.build_partition(w, U)
    prepared = hm.PreparedCause.build(hm.CauseData(X, w, d), partition)

    crude = (d.sum() + 0.5) / w.sum()
    init = hm.pack_initial(U, X.shape[1], float(np.log(crude)))
    target = lambda z: hm.log_posterior_and_grad(z, prepared, U)

    seed_seq = np.random.SeedSequence([config.seed, _key_entropy(key)])
    result = hmc_sample(target, init, config, seed=seed_seq)
    diag = diagnostics(result.draws)

    pooled = result.pooled
    A = pooled.shape[0]
    P = X.shape[1]
    log_theta = np.empty((A, U))
    beta = pooled[:, U : U + P].copy()
    eta = pooled[:, U + P].copy()
    rho = 1.0 / (1.0 + np.exp(-pooled[:, U + P + 1]))
    sigma = np.exp(pooled[:, U + P + 2])
    for a in range(A):
        log_theta[a] = hm.log_theta_from(pooled[a, :U], eta[a], rho[a], sigma[a])

    return StratumModel(
        key=key,
        cutpoints=partition.cutpoints,
        column_names=tuple(names),
        log_theta=log_theta,
        beta=beta,
        eta=eta,
        rho=rho,
        sigma=sigma,
        rhat=diag["rhat"],
        ess=diag["ess"],
        divergences=int(result.divergences.sum()),
        n_records=len(records),
        n_events=int(d.sum()),
        low_information=bool(d.sum() < MIN_EVENTS_FLAG),
        spline_specs=specs,
    )


def fit_all_strata(
    cohort: Cohort,
    j: int,
    config: HmcConfig,
    U: int = 20,
    stratify_site: bool = False,
    spline_covariates: tuple[str, ...] = (),
) -> PosteriorArtifact:
    """Fit every (stratum, cause) model for the visit-``j`` risk set."""
    strata = derive_strata(cohort, j, stratify_site=stratify_site)
    if not strata:
        raise EmptyStratum(f"no records at risk at visit {j}")
    models: dict[str, StratumModel] = {}
    for key in sorted(strata, key=lambda k: k.canonical()):
        try:
            models[key.canonical()] = fit_stratum_cause(
                strata[key], key, cohort.covariate_names, config, U=U,
                spline_covariates=spline_covariates,
            )
        except (EmptyStratum, AllDivergent) as exc:
            raise type(exc)(f"{key.canonical()}: {exc}") from exc
    return PosteriorArtifact(
        models=models,
        covariate_names=tuple(cohort.covariate_names),
        schedule_options=tuple(cohort.schedule_options),
        visit_index=j,
        seed=config.seed,
        stratify_site=stratify_site,
        spline_covariates=tuple(spline_covariates),
    )
