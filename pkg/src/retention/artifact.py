"""Persisted posterior draws: the unit of storage between fitting and use.

The artifact is a versioned JSON container holding, for every fitted
(stratum, cause) model, the partition, the constrained-scale parameter draws,
and convergence diagnostics, plus enough metadata (covariate names, spline
knots, schedule options) to rebuild predictor vectors for new subjects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import SplineSpec, StratumKey
from .errors import ArtifactLoadError, UnknownStratum
from .hazard_model import HazardParams, Partition

FORMAT_VERSION = 1


@dataclass
class StratumModel:
    """Posterior draws and bookkeeping for one (stratum, cause) model."""

    key: StratumKey
    cutpoints: np.ndarray
    column_names: tuple[str, ...]
    log_theta: np.ndarray  # (A, U)
    beta: np.ndarray  # (A, P)
    eta: np.ndarray  # (A,)
    rho: np.ndarray  # (A,)
    sigma: np.ndarray  # (A,)
    rhat: np.ndarray
    ess: np.ndarray
    divergences: int = 0
    n_records: int = 0
    n_events: int = 0
    low_information: bool = False
    spline_specs: dict[str, SplineSpec] = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.log_theta.shape[0]

    @property
    def partition(self) -> Partition:
        return Partition(self.cutpoints)

    def params_at(self, a: int) -> HazardParams:
        return HazardParams(
            log_theta=self.log_theta[a],
            beta=self.beta[a],
            eta=float(self.eta[a]),
            rho=float(self.rho[a]),
            sigma=float(self.sigma[a]),
        )

    def to_dict(self) -> dict:
        return {
            "key": self.key.canonical(),
            "cutpoints": self.cutpoints.tolist(),
            "column_names": list(self.column_names),
            "log_theta": self.log_theta.tolist(),
            "beta": self.beta.tolist(),
            "eta": self.eta.tolist(),
            "rho": self.rho.tolist(),
            "sigma": self.sigma.tolist(),
            "rhat": self.rhat.tolist(),
            "ess": self.ess.tolist(),
            "divergences": self.divergences,
            "n_records": self.n_records,
            "n_events": self.n_events,
            "low_information": self.low_information,
            "spline_specs": {
                name: {
                    "df": spec.df,
                    "boundary": list(spec.boundary),
                    "interior": list(spec.interior),
                }
                for name, spec in self.spline_specs.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StratumModel":
        A = len(d["eta"])
        return cls(
            key=StratumKey.from_canonical(d["key"]),
            cutpoints=np.asarray(d["cutpoints"], dtype=float),
            column_names=tuple(d["column_names"]),
            log_theta=np.asarray(d["log_theta"], dtype=float).reshape(A, -1),
            beta=np.asarray(d["beta"], dtype=float).reshape(A, -1),
            eta=np.asarray(d["eta"], dtype=float),
            rho=np.asarray(d["rho"], dtype=float),
            sigma=np.asarray(d["sigma"], dtype=float),
            rhat=np.asarray(d["rhat"], dtype=float),
            ess=np.asarray(d["ess"], dtype=float),
            divergences=int(d["divergences"]),
            n_records=int(d["n_records"]),
            n_events=int(d["n_events"]),
            low_information=bool(d["low_information"]),
            spline_specs={
                name: SplineSpec(
                    covariate=name,
                    df=int(s["df"]),
                    boundary=tuple(s["boundary"]),
                    interior=tuple(s["interior"]),
                )
                for name, s in d.get("spline_specs", {}).items()
            },
        )


@dataclass
class PosteriorArtifact:
    models: dict[str, StratumModel]
    covariate_names: tuple[str, ...]
    schedule_options: tuple[float, ...]
    visit_index: int = 1
    seed: int = 0
    stratify_site: bool = False
    spline_covariates: tuple[str, ...] = ()
    default_delta: float = 90.0 / 7.0

    def __post_init__(self):
        counts = {m.n_draws for m in self.models.values()}
        assert len(counts) <= 1, "draw counts differ across stratum models"

    @property
    def n_draws(self) -> int:
        return next(iter(self.models.values())).n_draws if self.models else 0

    def model_for(
        self,
        cause: int,
        schedule: float,
        pattern: tuple[bool, ...],
        site: str | None = None,
    ) -> StratumModel:
        key = StratumKey(self.visit_index, cause, float(schedule), tuple(pattern), site)
        model = self.models.get(key.canonical())
        if model is None:
            raise UnknownStratum(f"no fitted model for stratum {key.canonical()}")
        return model

    def thinned(self, step: int) -> "PosteriorArtifact":
        """Copy with every ``step``-th posterior draw kept in every model."""
        assert step >= 1
        models = {}
        for k, m in self.models.items():
            models[k] = StratumModel(
                key=m.key,
                cutpoints=m.cutpoints,
                column_names=m.column_names,
                log_theta=m.log_theta[::step],
                beta=m.beta[::step],
                eta=m.eta[::step],
                rho=m.rho[::step],
                sigma=m.sigma[::step],
                rhat=m.rhat,
                ess=m.ess,
                divergences=m.divergences,
                n_records=m.n_records,
                n_events=m.n_events,
                low_information=m.low_information,
                spline_specs=m.spline_specs,
            )
        return PosteriorArtifact(
            models=models,
            covariate_names=self.covariate_names,
            schedule_options=self.schedule_options,
            visit_index=self.visit_index,
            seed=self.seed,
            stratify_site=self.stratify_site,
            spline_covariates=self.spline_covariates,
            default_delta=self.default_delta,
        )

    def save(self, path) -> None:
        payload = {
            "version": FORMAT_VERSION,
            "covariate_names": list(self.covariate_names),
            "schedule_options": list(self.schedule_options),
            "visit_index": self.visit_index,
            "seed": self.seed,
            "stratify_site": self.stratify_site,
            "spline_covariates": list(self.spline_covariates),
            "default_delta": self.default_delta,
            "models": {k: m.to_dict() for k, m in self.models.items()},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "PosteriorArtifact":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ArtifactLoadError(f"cannot read artifact {path}: {exc}") from exc
        version = payload.get("version")
        if version != FORMAT_VERSION:
            raise ArtifactLoadError(f"unsupported artifact version {version!r}")
        return cls(
            models={k: StratumModel.from_dict(m) for k, m in payload["models"].items()},
            covariate_names=tuple(payload["covariate_names"]),
            schedule_options=tuple(payload["schedule_options"]),
            visit_index=int(payload["visit_index"]),
            seed=int(payload["seed"]),
            stratify_site=bool(payload["stratify_site"]),
            spline_covariates=tuple(payload["spline_covariates"]),
            default_delta=float(payload.get("default_delta", 90.0 / 7.0)),
        )


def build_predictor(
    model: StratumModel,
    covariates: dict[str, float],
    covariate_names: tuple[str, ...],
    prev_waiting: float | None = None,
    prev_schedule: float | None = None,
) -> np.ndarray:
    """Assemble one subject's predictor vector in the model's column order.

    ``covariates`` maps names to values for the covariates observed under the
    model's monitoring pattern; spline columns are expanded with the knots
    stored at fit time.
    """
    pattern = model.key.pattern
    parts: list[float] = []
    for p, name in enumerate(covariate_names):
        if not pattern[p]:
            continue
        if name not in covariates:
            raise UnknownStratum(
                f"covariate {name!r} is monitored in this stratum but missing from the request"
            )
        value = float(covariates[name])
        spec = model.spline_specs.get(name)
        if spec is not None:
            parts.extend(spec.basis(np.array([value]))[0])
        else:
            parts.append(value)
    if model.key.visit_index > 1:
        if prev_waiting is None or prev_schedule is None:
            raise UnknownStratum("prev_waiting and prev_schedule required for visits past the first")
        parts.append(float(prev_waiting))
        parts.append(float(prev_schedule))
    x = np.asarray(parts, dtype=float)
    if len(x) != len(model.column_names):
        raise UnknownStratum(
            f"predictor has {len(x)} columns, model expects {len(model.column_names)}"
        )
    return x
