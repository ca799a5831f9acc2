"""Tests for posterior g-computation against analytic oracles.

Oracle values are closed-form: exponential means, piecewise-exponential CDFs,
and the constant-rate competing-risks integral
psi = lambda1/(lambda1+lambda0) * (1 - exp(-(lambda1+lambda0)*(s+delta))).
"""

import numpy as np
import pytest
from pytest import approx
from scipy import stats

from retention import gcomp
from retention.artifact import PosteriorArtifact, StratumModel
from retention.dataset import StratumKey
from retention.errors import NonPositiveDelta, UnknownStratum
from retention.gcomp import (
    GcompConfig,
    OptimalSchedulePMF,
    RetentionEstimate,
    optimal_schedule,
    retention_probability,
    sample_waiting_time,
    subdistribution_curve,
    triage_quadrants,
)
from retention.hazard_model import HazardParams, Partition, cumulative_hazard


from conftest import analytic_psi, constant_rate_artifact, make_model


# ---------------------------------------------------------------------------
# waiting-time sampler


def test_exponential_mean_oracle():
    # constant rate 0.5 -> waiting times are Exp(0.5) with mean 2.0
    params = HazardParams(
        log_theta=np.array([np.log(0.5)]), beta=np.array([]), eta=0.0, rho=0.5, sigma=1.0
    )
    partition = Partition(np.array([0.0, 20.0]))
    rng = np.random.default_rng(7)
    draws = np.array(
        [sample_waiting_time(params, partition, np.array([]), 1000.0, rng)
         for _ in range(100_000)]
    )
    assert np.all(np.isfinite(draws))
    assert draws.mean() == approx(2.0, abs=0.02)


def test_near_zero_rate_interval_gets_no_draws():
    params = HazardParams(
        log_theta=np.array([-30.0, np.log(5.0)]), beta=np.array([]),
        eta=0.0, rho=0.5, sigma=1.0,
    )
    partition = Partition(np.array([0.0, 1.0, 2.0]))
    rng = np.random.default_rng(0)
    draws = np.array(
        [sample_waiting_time(params, partition, np.array([]), 50.0, rng)
         for _ in range(1000)]
    )
    assert np.all(draws >= 1.0)


def test_beyond_horizon_marker():
    params = HazardParams(
        log_theta=np.array([np.log(1e-4)]), beta=np.array([]), eta=0.0, rho=0.5, sigma=1.0
    )
    partition = Partition(np.array([0.0, 1.0]))
    rng = np.random.default_rng(3)
    draws = [sample_waiting_time(params, partition, np.array([]), 2.0, rng)
             for _ in range(200)]
    assert np.isinf(draws).mean() > 0.9


def test_piecewise_cdf_kolmogorov_oracle():
    # rates (1, 0.2, 2) on unit intervals; closed-form CDF 1 - exp(-Lambda(w))
    theta = np.array([1.0, 0.2, 2.0])
    params = HazardParams(
        log_theta=np.log(theta), beta=np.array([]), eta=0.0, rho=0.5, sigma=1.0
    )
    partition = Partition(np.array([0.0, 1.0, 2.0, 3.0]))
    rng = np.random.default_rng(11)
    draws = np.array(
        [sample_waiting_time(params, partition, np.array([]), 100.0, rng)
         for _ in range(100_000)]
    )

    def cdf(w):
        return 1.0 - np.exp(-cumulative_hazard(params, partition, np.asarray(w), np.array([])))

    stat = stats.kstest(draws, cdf).statistic
    assert stat < 0.01


def test_covariate_rescales_waiting_time():
    # beta = log 2 with x = 1 doubles the rate, halving the mean
    params = HazardParams(
        log_theta=np.array([np.log(0.5)]), beta=np.array([np.log(2.0)]),
        eta=0.0, rho=0.5, sigma=1.0,
    )
    partition = Partition(np.array([0.0, 30.0]))
    rng = np.random.default_rng(5)
    draws = np.array(
        [sample_waiting_time(params, partition, np.array([1.0]), 1000.0, rng)
         for _ in range(50_000)]
    )
    assert draws.mean() == approx(1.0, abs=0.02)


# ---------------------------------------------------------------------------
# retention probability


def test_competing_risks_analytic_oracle():
    lam1, lam0, s, delta = 0.3, 0.05, 2.0, 2.0
    artifact = constant_rate_artifact(lam1, lam0, schedules=(s,))
    config = GcompConfig(n_sims=100_000, seed=42)
    est = retention_probability(artifact, s, (False,), {}, delta, config)
    expected = analytic_psi(lam1, lam0, s, delta)
    assert expected == approx(0.6457, abs=5e-4)
    assert np.all(np.abs(est.draws - expected) < 0.01)
    assert est.mean == approx(expected, abs=0.01)


def test_sure_return_before_deadline():
    # death hazard ~0, return mass overwhelmingly before s + delta
    artifact = constant_rate_artifact(5.0, 1e-8, schedules=(2.0,))
    est = retention_probability(
        artifact, 2.0, (False,), {}, 2.0, GcompConfig(n_sims=5000, seed=1)
    )
    assert np.all(est.draws > 0.99)


def test_cause_swap_gives_death_subprobability():
    lam1, lam0, s, delta = 0.3, 0.05, 2.0, 2.0
    artifact = constant_rate_artifact(lam0, lam1, schedules=(s,))  # swapped
    est = retention_probability(
        artifact, s, (False,), {}, delta, GcompConfig(n_sims=100_000, seed=8)
    )
    expected = analytic_psi(lam0, lam1, s, delta)  # death-by-(s+delta) mass
    assert est.mean == approx(expected, abs=0.01)


def test_covariate_effect_on_retention():
    lam1, lam0, s, delta = 0.3, 0.05, 2.0, 2.0
    artifact = constant_rate_artifact(lam1, lam0, schedules=(s,))
    # replace the return model with one carrying beta = log 2 on x1
    ret = artifact.model_for(1, s, (False,))
    boosted = make_model(
        1, s, ret.log_theta, ret.cutpoints,
        beta=np.full((ret.n_draws, 1), np.log(2.0)),
        pattern=(True,), column_names=("x1",),
    )
    artifact.models[boosted.key.canonical()] = boosted
    death = artifact.model_for(0, s, (False,))
    death2 = make_model(0, s, death.log_theta, death.cutpoints, pattern=(True,),
                        column_names=("x1",))
    artifact.models[death2.key.canonical()] = death2
    est = retention_probability(
        artifact, s, (True,), {"x1": 1.0}, delta, GcompConfig(n_sims=100_000, seed=2)
    )
    assert est.mean == approx(analytic_psi(2 * lam1, lam0, s, delta), abs=0.01)


def test_retention_estimate_summaries():
    est = RetentionEstimate(np.array([0.2, 0.4, 0.6, 0.8]))
    lo, hi = est.ci
    assert lo <= est.median <= hi
    assert 0.0 <= lo and hi <= 1.0
    d = est.to_dict()
    assert set(d) == {"psi_mean", "psi_median", "psi_ci"}
    assert d["psi_mean"] == approx(0.5)


def test_retention_is_deterministic_given_seed():
    artifact = constant_rate_artifact(0.3, 0.05)
    config = GcompConfig(n_sims=2000, seed=9)
    a = retention_probability(artifact, 2.0, (False,), {}, 2.0, config)
    b = retention_probability(artifact, 2.0, (False,), {}, 2.0, config)
    assert np.array_equal(a.draws, b.draws)


def test_nonpositive_delta_rejected():
    artifact = constant_rate_artifact(0.3, 0.05)
    with pytest.raises(NonPositiveDelta):
        retention_probability(artifact, 2.0, (False,), {}, 0.0, GcompConfig(n_sims=10))
    with pytest.raises(NonPositiveDelta):
        subdistribution_curve(
            artifact, 2.0, (False,), {}, [-1.0, 2.0], GcompConfig(n_sims=10)
        )


def test_unknown_stratum_raises():
    artifact = constant_rate_artifact(0.3, 0.05, schedules=(2.0,))
    with pytest.raises(UnknownStratum):
        retention_probability(artifact, 4.0, (False,), {}, 2.0, GcompConfig(n_sims=10))


# ---------------------------------------------------------------------------
# optimal schedule PMF


def exchangeable_option_artifact(A=2000, seed=0, identical=False, boost=None):
    """Three options whose return-rate draws are i.i.d. from one distribution.

    The return hazard lives entirely below w=4, i.e. below the earliest
    deadline s + delta = 2 + 2, so every option's retention indicator reduces
    to "returned at all before death" and per-draw comparisons depend only on
    the option's own rate draws.
    """
    rng = np.random.default_rng(seed)
    cuts = (0.0, 4.0, 8.0)
    models = {}
    base = rng.normal(np.log(0.3), 0.2, size=A)
    for s in (2.0, 4.0, 8.0):
        lt = base if identical else rng.normal(np.log(0.3), 0.2, size=A)
        if boost is not None and s == boost:
            lt = lt + np.log(10.0)
        log_theta = np.column_stack([lt, np.full(A, -30.0)])
        ret = make_model(1, s, log_theta, cuts)
        death = make_model(0, s, np.full((A, 2), np.log(0.05)), cuts)
        models[ret.key.canonical()] = ret
        models[death.key.canonical()] = death
    return PosteriorArtifact(
        models=models, covariate_names=("x1",), schedule_options=(2.0, 4.0, 8.0)
    )


def test_exchangeable_options_give_uniform_pmf():
    artifact = exchangeable_option_artifact(A=2000, seed=4)
    result = optimal_schedule(
        artifact, (False,), {}, 2.0, GcompConfig(n_sims=1000, seed=21)
    )
    assert sum(result.pmf.values()) == 1.0
    for p in result.pmf.values():
        assert p == approx(1 / 3, abs=0.05)
    assert result.triangle == (result.pmf[2.0], result.pmf[4.0])
    assert result.pmf[result.mode] == max(result.pmf.values())


def test_common_random_numbers_couple_identical_options():
    # identical rate draws + shared uniforms -> per-draw psi exactly equal,
    # so the smallest option wins every tie
    artifact = exchangeable_option_artifact(A=200, seed=6, identical=True)
    config = GcompConfig(n_sims=500, seed=13)
    psi = {}
    u = gcomp._uniforms(config, artifact.n_draws, 1)
    for s in (2.0, 4.0, 8.0):
        ret = artifact.model_for(1, s, (False,))
        death = artifact.model_for(0, s, (False,))
        x = np.zeros((1, 0))
        psi[s] = gcomp.psi_draws(ret, death, x, x, s, 2.0, u, config)
    assert np.array_equal(psi[2.0], psi[4.0])
    assert np.array_equal(psi[2.0], psi[8.0])
    result = optimal_schedule(artifact, (False,), {}, 2.0, config)
    assert result.pmf == {2.0: 1.0, 4.0: 0.0, 8.0: 0.0}
    assert result.mode == 2.0


def test_dominating_option_takes_all_mass():
    artifact = exchangeable_option_artifact(A=500, seed=2, boost=4.0)
    result = optimal_schedule(
        artifact, (False,), {}, 2.0, GcompConfig(n_sims=1000, seed=3)
    )
    assert result.pmf[4.0] > 0.99
    assert result.mode == 4.0


def test_analytic_ordering_picks_longest_schedule():
    # one shared constant hazard: psi(s) is strictly increasing in s, so the
    # longest option is optimal in (almost) every draw at delta = 13 weeks
    artifact = constant_rate_artifact(0.1, 0.01, schedules=(2.0, 4.0, 8.0), end=24.0)
    result = optimal_schedule(
        artifact, (False,), {}, 13.0, GcompConfig(n_sims=1000, seed=17)
    )
    psis = [analytic_psi(0.1, 0.01, s, 13.0) for s in (2.0, 4.0, 8.0)]
    assert psis[2] > psis[1] > psis[0]
    assert result.mode == 8.0
    assert result.pmf[8.0] >= 0.95


def test_pmf_serialization():
    r = OptimalSchedulePMF(pmf={2.0: 0.5, 4.0: 0.3, 8.0: 0.2}, mode=2.0,
                           triangle=(0.5, 0.3))
    d = r.to_dict()
    assert d["pmf"] == {"2": 0.5, "4": 0.3, "8": 0.2}
    assert d["mode"] == 2.0
    assert d["triangle"] == [0.5, 0.3]


# ---------------------------------------------------------------------------
# subdistribution curves


def test_curve_matches_analytic_and_is_monotone():
    lam1, lam0, s = 0.3, 0.05, 2.0
    artifact = constant_rate_artifact(lam1, lam0, schedules=(s,))
    grid = [1.0, 2.0, 4.0, 8.0]
    curve = subdistribution_curve(
        artifact, s, (False,), {}, grid, GcompConfig(n_sims=100_000, seed=5)
    )
    for d, est in zip(grid, curve):
        assert est.mean == approx(analytic_psi(lam1, lam0, s, d), abs=0.01)
    for prev, nxt in zip(curve, curve[1:]):
        assert np.all(nxt.draws >= prev.draws)


def test_curve_limit_is_return_before_death():
    lam1, lam0, s = 0.3, 0.05, 2.0
    artifact = constant_rate_artifact(lam1, lam0, schedules=(s,))
    curve = subdistribution_curve(
        artifact, s, (False,), {}, [200.0], GcompConfig(n_sims=100_000, seed=6)
    )
    assert curve[0].mean == approx(lam1 / (lam1 + lam0), abs=0.01)


def test_min_construction_subdensity():
    # binned subdensity of (W, delta=return) matches
    # f_1(w) = lam1 * exp(-(lam1+lam0) w) for constant rates
    lam1, lam0 = 0.4, 0.1
    rng = np.random.default_rng(19)
    n = 100_000
    lt1 = np.array([np.log(lam1)])
    lt0 = np.array([np.log(lam0)])
    cuts = np.array([0.0, 50.0])
    w1 = gcomp._invert_baseline(lt1, cuts, 500.0, -np.log(rng.random(n)))
    w0 = gcomp._invert_baseline(lt0, cuts, 500.0, -np.log(rng.random(n)))
    w = np.minimum(w1, w0)
    is_return = w1 < w0
    tot = lam1 + lam0
    edges = np.arange(0.0, 6.5, 1.0)
    for a, b in zip(edges[:-1], edges[1:]):
        observed = np.mean(is_return & (w >= a) & (w < b))
        expected = lam1 / tot * (np.exp(-tot * a) - np.exp(-tot * b))
        assert observed == approx(expected, abs=0.01)


# ---------------------------------------------------------------------------
# triage quadrants


def synthetic_estimate(mean, width):
    return RetentionEstimate(np.linspace(mean - width / 2, mean + width / 2, 401))


def test_quadrant_corners():
    corners = [
        synthetic_estimate(0.2, 0.02),
        synthetic_estimate(0.2, 0.5),
        synthetic_estimate(0.8, 0.02),
        synthetic_estimate(0.8, 0.5),
    ]
    assert triage_quadrants(corners) == ["LL", "LH", "HL", "HH"]


def test_quadrant_ties_count_as_high():
    same = [synthetic_estimate(0.5, 0.1) for _ in range(3)]
    assert triage_quadrants(same) == ["HH", "HH", "HH"]


def test_low_mean_narrow_ci_subject_flagged():
    group = [synthetic_estimate(0.9, 0.3) for _ in range(5)]
    group.append(synthetic_estimate(0.2, 0.05))
    assert triage_quadrants(group)[-1] == "LL"
