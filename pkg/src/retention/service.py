"""Read-only HTTP API over one persisted posterior artifact.

The artifact is loaded once and never mutated; every response is a pure
function of (artifact, request body), with the Monte Carlo seed taken from
the request (default 0) so clients can hold comparisons stable across edits.
Strata appear in responses under their canonical key strings.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import gcomp
from .artifact import PosteriorArtifact
from .errors import BindError, RetentionError, UnknownStratum

DEFAULT_N_SIMS = 1000


class PredictRequest(BaseModel):
    covariates: dict[str, float]
    pattern: list[bool]
    schedule: float
    site: str | None = None
    delta: float | None = None
    seed: int = 0
    n_sims: int = Field(default=DEFAULT_N_SIMS, ge=1)
    prev_waiting: float | None = None
    prev_schedule: float | None = None


class OptimizeRequest(BaseModel):
    covariates: dict[str, float]
    pattern: list[bool]
    site: str | None = None
    delta: float | None = None
    options: list[float] | None = None
    seed: int = 0
    n_sims: int = Field(default=DEFAULT_N_SIMS, ge=1)
    prev_waiting: float | None = None
    prev_schedule: float | None = None


class CurveRequest(BaseModel):
    covariates: dict[str, float]
    pattern: list[bool]
    schedule: float
    delta_grid: list[float]
    site: str | None = None
    seed: int = 0
    n_sims: int = Field(default=DEFAULT_N_SIMS, ge=1)
    prev_waiting: float | None = None
    prev_schedule: float | None = None


def _check_pattern(artifact: PosteriorArtifact, pattern: list[bool]):
    if len(pattern) != len(artifact.covariate_names):
        raise UnknownStratum(
            f"pattern has {len(pattern)} entries, artifact covers "
            f"{len(artifact.covariate_names)} covariates {artifact.covariate_names}"
        )
    return tuple(pattern)


def _stratum_keys(artifact, schedule, pattern, site) -> dict[str, str]:
    return {
        "return": artifact.model_for(1, schedule, pattern, site).key.canonical(),
        "death": artifact.model_for(0, schedule, pattern, site).key.canonical(),
    }


def create_app(artifact: PosteriorArtifact) -> FastAPI:
    app = FastAPI(title="retention service")

    @app.exception_handler(RetentionError)
    async def retention_error_handler(request: Request, exc: RetentionError):
        status = 404 if isinstance(exc, UnknownStratum) else 400
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "strata": len(artifact.models),
            "draws": artifact.n_draws,
            "covariates": list(artifact.covariate_names),
            "schedule_options": list(artifact.schedule_options),
            "default_delta": artifact.default_delta,
        }

    @app.post("/predict")
    def predict(req: PredictRequest):
        pattern = _check_pattern(artifact, req.pattern)
        delta = req.delta if req.delta is not None else artifact.default_delta
        est = gcomp.retention_probability(
            artifact, req.schedule, pattern, req.covariates, delta,
            gcomp.GcompConfig(n_sims=req.n_sims, seed=req.seed),
            site=req.site, prev_waiting=req.prev_waiting, prev_schedule=req.prev_schedule,
        )
        body = est.to_dict()
        body["delta"] = delta
        body["schedule"] = req.schedule
        body["strata"] = _stratum_keys(artifact, req.schedule, pattern, req.site)
        return body

    @app.post("/optimize")
    def optimize(req: OptimizeRequest):
        pattern = _check_pattern(artifact, req.pattern)
        delta = req.delta if req.delta is not None else artifact.default_delta
        options = req.options if req.options else list(artifact.schedule_options)
        result = gcomp.optimal_schedule(
            artifact, pattern, req.covariates, delta,
            gcomp.GcompConfig(n_sims=req.n_sims, seed=req.seed),
            options=options, site=req.site,
            prev_waiting=req.prev_waiting, prev_schedule=req.prev_schedule,
        )
        body = result.to_dict()
        body["delta"] = delta
        body["strata"] = {
            f"{s:g}": _stratum_keys(artifact, s, pattern, req.site)
            for s in sorted(options)
        }
        return body

    @app.post("/curve")
    def curve(req: CurveRequest):
        pattern = _check_pattern(artifact, req.pattern)
        grid = sorted(req.delta_grid)
        estimates = gcomp.subdistribution_curve(
            artifact, req.schedule, pattern, req.covariates, grid,
            gcomp.GcompConfig(n_sims=req.n_sims, seed=req.seed),
            site=req.site, prev_waiting=req.prev_waiting, prev_schedule=req.prev_schedule,
        )
        return {
            "schedule": req.schedule,
            "strata": _stratum_keys(artifact, req.schedule, pattern, req.site),
            "curve": [
                {"delta": d, "mean": e.mean, "lo": e.ci[0], "hi": e.ci[1]}
                for d, e in zip(grid, estimates)
            ],
        }

    return app


def serve(artifact_path, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Load the artifact and block serving HTTP until interrupted."""
    import uvicorn

    app = create_app(PosteriorArtifact.load(artifact_path))
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
