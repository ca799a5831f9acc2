"""HTTP service tests against synthetic artifacts (no network, TestClient)."""

import numpy as np
import pytest
from fastapi.testclient import TestClient
from pytest import approx

from conftest import constant_rate_artifact
from retention import gcomp
from retention.service import create_app

DELTA_DEFAULT = 90.0 / 7.0


@pytest.fixture(scope="module")
def client():
    artifact = constant_rate_artifact(0.3, 0.05, schedules=(2.0, 4.0, 8.0), A=40)
    return TestClient(create_app(artifact)), artifact


def predict_body(**over):
    body = {"covariates": {}, "pattern": [False], "schedule": 2.0, "delta": 2.0,
            "seed": 7, "n_sims": 2000}
    body.update(over)
    return body


def test_health(client):
    c, artifact = client
    r = c.get("/health")
    assert r.status_code == 200
    assert r.json() == {
        "status": "ok",
        "strata": 6,
        "draws": 40,
        "covariates": ["x1"],
        "schedule_options": [2.0, 4.0, 8.0],
        "default_delta": approx(DELTA_DEFAULT),
    }


def test_predict_matches_direct_library_call(client):
    c, artifact = client
    r = c.post("/predict", json=predict_body())
    assert r.status_code == 200
    body = r.json()
    est = gcomp.retention_probability(
        artifact, 2.0, (False,), {}, 2.0, gcomp.GcompConfig(n_sims=2000, seed=7)
    )
    assert body["psi_mean"] == approx(est.mean)
    assert body["psi_ci"] == approx(list(est.ci))
    assert body["strata"]["return"] == "1:1:2:0:-"
    assert body["strata"]["death"] == "1:0:2:0:-"


def test_predict_is_byte_deterministic(client):
    c, _ = client
    a = c.post("/predict", json=predict_body())
    b = c.post("/predict", json=predict_body())
    assert a.content == b.content


def test_predict_delta_defaults_to_ltfu(client):
    c, _ = client
    body = predict_body()
    del body["delta"]
    implicit = c.post("/predict", json=body)
    explicit = c.post("/predict", json=predict_body(delta=DELTA_DEFAULT))
    assert implicit.json() == explicit.json()
    assert implicit.json()["delta"] == approx(DELTA_DEFAULT)


def test_predict_negative_delta_rejected(client):
    c, _ = client
    r = c.post("/predict", json=predict_body(delta=-1.0))
    assert r.status_code == 400
    assert r.json()["error"] == "NonPositiveDelta"


def test_predict_unknown_stratum_404(client):
    c, _ = client
    r = c.post("/predict", json=predict_body(schedule=6.0))
    assert r.status_code == 404
    assert r.json()["error"] == "UnknownStratum"


def test_predict_bad_pattern_length(client):
    c, _ = client
    r = c.post("/predict", json=predict_body(pattern=[False, True, False]))
    assert r.status_code == 404
    assert "pattern" in r.json()["detail"]


def test_predict_missing_field_422(client):
    c, _ = client
    body = predict_body()
    del body["schedule"]
    r = c.post("/predict", json=body)
    assert r.status_code == 422
    assert "schedule" in str(r.json())


def test_optimize_response_shape(client):
    c, _ = client
    r = c.post("/optimize", json={"covariates": {}, "pattern": [False],
                                  "delta": 2.0, "seed": 3, "n_sims": 500})
    assert r.status_code == 200
    body = r.json()
    assert sum(body["pmf"].values()) == approx(1.0)
    assert str(f"{body['mode']:g}") in body["pmf"]
    assert body["triangle"] == [body["pmf"]["2"], body["pmf"]["4"]]
    assert set(body["strata"]) == {"2", "4", "8"}


def test_optimize_matches_direct_library_call(client):
    c, artifact = client
    r = c.post("/optimize", json={"covariates": {}, "pattern": [False],
                                  "delta": 2.0, "seed": 11, "n_sims": 400})
    direct = gcomp.optimal_schedule(
        artifact, (False,), {}, 2.0, gcomp.GcompConfig(n_sims=400, seed=11)
    )
    assert r.json()["pmf"] == direct.to_dict()["pmf"]
    assert r.json()["mode"] == direct.mode


def test_curve_monotone_and_matches_library(client):
    c, artifact = client
    grid = [1.0, 2.0, 4.0, 8.0]
    r = c.post("/curve", json={"covariates": {}, "pattern": [False], "schedule": 4.0,
                               "delta_grid": grid, "seed": 5, "n_sims": 2000})
    assert r.status_code == 200
    curve = r.json()["curve"]
    means = [pt["mean"] for pt in curve]
    assert means == sorted(means)
    direct = gcomp.subdistribution_curve(
        artifact, 4.0, (False,), {}, grid, gcomp.GcompConfig(n_sims=2000, seed=5)
    )
    assert means == approx([e.mean for e in direct])
    for pt in curve:
        assert pt["lo"] <= pt["mean"] <= pt["hi"]


def test_curve_bad_grid_rejected(client):
    c, _ = client
    r = c.post("/curve", json={"covariates": {}, "pattern": [False], "schedule": 4.0,
                               "delta_grid": [0.0, 2.0], "seed": 5})
    assert r.status_code == 400
    assert r.json()["error"] == "NonPositiveDelta"
