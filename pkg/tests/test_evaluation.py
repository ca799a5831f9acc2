"""Tests for scoring metrics and the scenario harness."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest import approx

from retention.errors import LengthMismatch, OneClassOnly
from retention.evaluation import (
    ALL_SCENARIOS,
    ExperimentConfig,
    auc,
    btm_predict,
    format_report,
    logistic_predict,
    optimal_accuracy,
    run_experiment,
    write_report_csv,
)
from retention.sampler import HmcConfig, fit_all_strata
from retention.simulator import DgpConfig, TruthRecord, simulate_cohort

TINY_HMC = HmcConfig(warmup_iters=100, sampling_iters=100, leapfrog_steps=8, chains=2)


def truth_of(modes):
    return [TruthRecord(f"s{i}", {float(m): 1.0}, float(m), 1) for i, m in enumerate(modes)]


# ---------------------------------------------------------------------------
# AUC


def test_auc_perfect_separation():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auc_constant_scores():
    assert auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5


def test_auc_hand_counted_pairs():
    # of the 4 (neg, pos) pairs, 3 are concordant: (0.1,0.35), (0.1,0.8), (0.4,0.8)
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == approx(0.75)


def test_auc_one_class_raises():
    with pytest.raises(OneClassOnly):
        auc([0.1, 0.2], [1, 1])


def test_auc_length_mismatch():
    with pytest.raises(LengthMismatch):
        auc([0.1, 0.2, 0.3], [0, 1])


@settings(deadline=None, max_examples=40)
@given(st.lists(st.integers(-500, 500), min_size=4, max_size=30, unique=True)
       .map(lambda vals: [v / 100 for v in vals]),
       st.data())
def test_auc_invariant_under_monotone_transform(scores, data):
    labels = data.draw(
        st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores))
    )
    if len(set(labels)) < 2:
        labels[0], labels[1] = 0, 1
    base = auc(scores, labels)
    transformed = auc(np.exp(0.5 * np.asarray(scores)) + 3.0, labels)
    assert transformed == approx(base)


def test_auc_complement_identity_for_tie_free_scores():
    rng = np.random.default_rng(0)
    scores = rng.permutation(20).astype(float)
    labels = (rng.random(20) < 0.5).astype(int)
    labels[:2] = [0, 1]
    assert auc(scores, labels) + auc(scores, 1 - labels) == approx(1.0)


# ---------------------------------------------------------------------------
# optimal accuracy


def test_optimal_accuracy_counts():
    truth = truth_of([2.0, 4.0, 8.0, 2.0])
    assert optimal_accuracy([2.0, 4.0, 8.0, 2.0], truth) == 1.0
    assert optimal_accuracy([4.0, 8.0, 2.0, 4.0], truth) == 0.0
    assert optimal_accuracy([2.0, 4.0, 8.0, 4.0], truth) == 0.75


def test_optimal_accuracy_length_mismatch():
    with pytest.raises(LengthMismatch):
        optimal_accuracy([2.0], truth_of([2.0, 4.0]))


# ---------------------------------------------------------------------------
# method predictions on a tiny fitted artifact


@pytest.fixture(scope="module")
def tiny_fit():
    train, test, truth = simulate_cohort(
        DgpConfig(n=150, n_test=60, missingness="none", censoring="low", seed=3)
    )
    artifact = fit_all_strata(train, 1, TINY_HMC, U=6).thinned(4)
    return train, test, truth, artifact


def test_btm_predict_shapes_and_ranges(tiny_fit):
    _, test, _, artifact = tiny_fit
    scores, modes = btm_predict(artifact, list(test.records), 2.0, n_sims=50, seed=1)
    assert scores.shape == modes.shape == (len(test.records),)
    assert np.all((scores >= 0) & (scores <= 1))
    assert set(modes) <= {2.0, 4.0, 8.0}


def test_btm_predict_deterministic(tiny_fit):
    _, test, _, artifact = tiny_fit
    a = btm_predict(artifact, list(test.records)[:10], 2.0, n_sims=50, seed=5)
    b = btm_predict(artifact, list(test.records)[:10], 2.0, n_sims=50, seed=5)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_btm_predict_pattern_fallback(tiny_fit):
    # drop one schedule's exact-pattern models; prediction must still work
    # through the largest usable sub-pattern
    _, test, _, artifact = tiny_fit
    import dataclasses as dc

    full = tuple([True] * 6)
    reduced = dict(artifact.models)
    sub = tuple([True, True, False, True, True, False])
    for cause in (0, 1):
        reduced.pop(artifact.model_for(cause, 4.0, full).key.canonical())
    # install sub-pattern models for the dropped schedule so a fallback exists
    for cause in (0, 1):
        donor = artifact.model_for(cause, 2.0, full)
        key = dc.replace(donor.key, schedule=4.0, pattern=sub)
        idx = [p for p, used in enumerate(sub) if used]
        reduced[key.canonical()] = dc.replace(
            donor,
            key=key,
            column_names=tuple(artifact.covariate_names[p] for p in idx),
            beta=donor.beta[:, idx],
        )
    hollowed = dc.replace(artifact, models=reduced)
    scores, modes = btm_predict(hollowed, list(test.records)[:5], 2.0, n_sims=20, seed=2)
    assert np.all(np.isfinite(scores))


def test_logistic_predict_shapes(tiny_fit):
    train, test, _, _ = tiny_fit
    scores, modes = logistic_predict(train, list(test.records), 2.0, (2.0, 4.0, 8.0))
    assert np.all((scores > 0) & (scores < 1))
    assert set(modes) <= {2.0, 4.0, 8.0}


def test_logistic_modes_are_constant_within_pattern(tiny_fit):
    # a linear schedule term forces a single recommended option per pattern
    train, test, _, _ = tiny_fit
    _, modes = logistic_predict(train, list(test.records), 2.0, (2.0, 4.0, 8.0))
    assert len(set(modes)) == 1  # no missingness -> one pattern


# ---------------------------------------------------------------------------
# scenario harness shape


def test_run_experiment_tiny(tmp_path):
    config = ExperimentConfig(
        replications=1, n=120, n_test=40, scenarios=(("low", "none"),),
        hmc=TINY_HMC, intervals=5, thin=8, n_sims=30,
    )
    results = run_experiment(config)
    assert len(results) == 2
    rows = [r.row() for r in results]
    assert {r["method"] for r in rows} == {"btm", "logistic"}
    for r in rows:
        assert np.isfinite(r["auc_mean"]) and np.isfinite(r["accuracy_mean"])
        assert r["replications"] == 1
    text = format_report(results)
    assert "Test AUC" in text and "Optimal accuracy" in text
    out = tmp_path / "report.csv"
    write_report_csv(results, out)
    assert out.read_text().count("\n") == 3  # header + 2 rows


def test_scenario_grid_is_complete():
    assert len(ALL_SCENARIOS) == 6
    assert set(ALL_SCENARIOS) == {
        (c, m) for c in ("low", "high") for m in ("none", "low", "high")
    }
