"""Shared test builders for synthetic posterior artifacts."""

import numpy as np

from retention.artifact import PosteriorArtifact, StratumModel
from retention.dataset import StratumKey


def make_model(cause, schedule, log_theta, cutpoints, beta=None, pattern=(False,),
               column_names=()):
    log_theta = np.atleast_2d(np.asarray(log_theta, dtype=float))
    A = log_theta.shape[0]
    if beta is None:
        beta = np.zeros((A, len(column_names)))
    return StratumModel(
        key=StratumKey(1, cause, float(schedule), tuple(pattern), None),
        cutpoints=np.asarray(cutpoints, dtype=float),
        column_names=tuple(column_names),
        log_theta=log_theta,
        beta=np.asarray(beta, dtype=float).reshape(A, -1),
        eta=np.zeros(A),
        rho=np.full(A, 0.5),
        sigma=np.ones(A),
        rhat=np.ones(log_theta.shape[1] + len(column_names) + 3),
        ess=np.full(log_theta.shape[1] + len(column_names) + 3, 400.0),
    )


def constant_rate_artifact(lam_return, lam_death, schedules=(2.0,), A=4, end=40.0):
    """Artifact with constant cause-specific rates shared by every draw."""
    models = {}
    for s in schedules:
        for cause, lam in ((1, lam_return), (0, lam_death)):
            m = make_model(cause, s, np.full((A, 1), np.log(lam)), (0.0, end))
            models[m.key.canonical()] = m
    return PosteriorArtifact(
        models=models, covariate_names=("x1",), schedule_options=tuple(schedules)
    )


def analytic_psi(lam1, lam0, s, delta):
    tot = lam1 + lam0
    return lam1 / tot * (1.0 - np.exp(-tot * (s + delta)))
