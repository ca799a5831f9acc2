"""Visit-level cohort ingestion, risk sets, stratification, and retention labels.

A cohort is a flat collection of at-risk intervals: each record describes the
waiting time from one clinic visit until the next event (return, death, or
censoring), together with the covariates monitored at that visit and the
Markov history (previous waiting time and previous scheduled return).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.interpolate import BSpline

from .errors import (
    BadEventCode,
    MissingColumn,
    NonPositiveDelta,
    NonPositiveWaitingTime,
    OrphanVisit,
)

EVENT_RETURN = 1
EVENT_DEATH = 0
EVENT_CENSOR = -1

VALID_EVENT_CODES = (EVENT_RETURN, EVENT_DEATH, EVENT_CENSOR)

#: default schedule options, in weeks
DEFAULT_SCHEDULE_OPTIONS = (2.0, 4.0, 8.0)

#: default delay tolerance (weeks) for the loss-to-followup outcome
DEFAULT_DELTA = 90.0 / 7.0


class RetentionLabel(enum.Enum):
    RETAINED = 1
    NOT_RETAINED = 0
    MISSING = "missing"


@dataclass(frozen=True)
class VisitRecord:
    """One at-risk interval following a visit.

    ``covariates`` holds NaN in every position where ``monitoring`` is False;
    those entries must never be read directly — use :meth:`observed_value`.
    """

    subject_id: str
    visit_index: int
    visit_time: float
    scheduled_return: float
    waiting_time: float
    event_type: int
    covariates: np.ndarray
    monitoring: np.ndarray
    site: str = ""
    prev_waiting: float | None = None
    prev_schedule: float | None = None

    def observed_value(self, p: int) -> float:
        assert self.monitoring[p], f"covariate {p} was not monitored at this visit"
        return float(self.covariates[p])

    @property
    def pattern(self) -> tuple[bool, ...]:
        return tuple(bool(b) for b in self.monitoring)


@dataclass(frozen=True)
class Cohort:
    records: tuple[VisitRecord, ...]
    covariate_names: tuple[str, ...]
    schedule_options: tuple[float, ...] = DEFAULT_SCHEDULE_OPTIONS

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(
            self, "schedule_options", tuple(sorted(self.schedule_options))
        )

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True, order=True)
class StratumKey:
    """Identifies one fitted hazard model: (visit, cause, schedule, pattern[, site])."""

    visit_index: int
    cause: int
    schedule: float
    pattern: tuple[bool, ...]
    site: str | None = None

    def canonical(self) -> str:
        bits = "".join("1" if b else "0" for b in self.pattern)
        site = self.site if self.site is not None else "-"
        return f"{self.visit_index}:{self.cause}:{self.schedule:g}:{bits}:{site}"

    @classmethod
    def from_canonical(cls, text: str) -> "StratumKey":
        j, k, s, bits, site = text.split(":")
        return cls(
            visit_index=int(j),
            cause=int(k),
            schedule=float(s),
            pattern=tuple(c == "1" for c in bits),
            site=None if site == "-" else site,
        )


def parse_cohort(
    path,
    covariate_names: list[str],
    schedule_options=DEFAULT_SCHEDULE_OPTIONS,
    monitoring_prefix: str = "m_",
) -> Cohort:
    """Read one-row-per-interval CSV into a validated :class:`Cohort`.

    Expected columns: subject_id, visit_index, visit_time_weeks,
    scheduled_return_weeks, waiting_time_weeks, event_type, site, plus one
    covariate column per name and one 0/1 monitoring column ``m_<name>``.
    Rows violating an invariant raise with their (1-based, post-header) row
    number.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    required = [
        "subject_id",
        "visit_index",
        "visit_time_weeks",
        "scheduled_return_weeks",
        "waiting_time_weeks",
        "event_type",
        "site",
    ]
    monitor_cols = [monitoring_prefix + c for c in covariate_names]
    for col in required + list(covariate_names) + monitor_cols:
        if col not in df.columns:
            raise MissingColumn(f"column {col!r} not found in {path}")

    df = df.sort_values(["subject_id", "visit_index"], kind="stable")
    returned: dict[str, dict[int, tuple[float, float]]] = {}
    records: list[VisitRecord] = []
    for row_num, row in enumerate(df.itertuples(index=False), start=1):
        d = row._asdict()
        subject = str(d["subject_id"])
        j = int(d["visit_index"])
        event = int(d["event_type"])
        w = float(d["waiting_time_weeks"])
        s = float(d["scheduled_return_weeks"])
        if event not in VALID_EVENT_CODES:
            raise BadEventCode(f"row {row_num}: event_type {event} not in {VALID_EVENT_CODES}")
        if not w > 0:
            raise NonPositiveWaitingTime(f"row {row_num}: waiting_time {w} must be > 0")

        prev_w = prev_s = None
        if j > 1:
            prior = returned.get(subject, {}).get(j - 1)
            if prior is None:
                raise OrphanVisit(
                    f"row {row_num}: subject {subject} visit {j} has no returned visit {j - 1}"
                )
            prev_w, prev_s = prior

        monitoring = np.array([bool(int(d[m])) for m in monitor_cols])
        covariates = np.full(len(covariate_names), np.nan)
        for p, name in enumerate(covariate_names):
            if monitoring[p]:
                value = d[name]
                if value is None or (isinstance(value, float) and math.isnan(value)):
                    raise MissingColumn(
                        f"row {row_num}: covariate {name!r} empty but marked monitored"
                    )
                covariates[p] = float(value)

        records.append(
            VisitRecord(
                subject_id=subject,
                visit_index=j,
                visit_time=float(d["visit_time_weeks"]),
                scheduled_return=s,
                waiting_time=w,
                event_type=event,
                covariates=covariates,
                monitoring=monitoring,
                site=str(d["site"]),
                prev_waiting=prev_w,
                prev_schedule=prev_s,
            )
        )
        if event == EVENT_RETURN:
            returned.setdefault(subject, {})[j] = (w, s)

    return Cohort(tuple(records), tuple(covariate_names), tuple(schedule_options))


def risk_set(cohort: Cohort, j: int) -> list[VisitRecord]:
    """Records at risk of a subsequent event at visit ``j``."""
    return [r for r in cohort.records if r.visit_index == j]


def derive_strata(
    cohort: Cohort, j: int, stratify_site: bool = False
) -> dict[StratumKey, list[VisitRecord]]:
    """Partition the visit-``j`` risk set by (schedule, monitoring pattern[, site]).

    Each occupied cell yields two keys, one per cause (return=1, death=0),
    both mapping to the same record list: the cause indexes the model, not
    the data.
    """
    groups: dict[tuple, list[VisitRecord]] = {}
    for r in risk_set(cohort, j):
        site = r.site if stratify_site else None
        groups.setdefault((r.scheduled_return, r.pattern, site), []).append(r)
    out: dict[StratumKey, list[VisitRecord]] = {}
    for (s, pattern, site), recs in groups.items():
        for cause in (EVENT_RETURN, EVENT_DEATH):
            out[StratumKey(j, cause, s, pattern, site)] = recs
    return out


def retention_label(w: float, event: int, s: float, delta: float) -> RetentionLabel:
    """Three-valued retention outcome for one interval at tolerance ``delta``.

    Retained iff the first event is a return no more than ``delta`` weeks
    past the scheduled time. Death is never retained. Censoring before
    s + delta leaves the outcome unknowable; censoring after it proves
    non-retention.
    """
    if not delta > 0:
        raise NonPositiveDelta(f"delta must be > 0, got {delta}")
    if event == EVENT_RETURN:
        return RetentionLabel.RETAINED if w - s <= delta else RetentionLabel.NOT_RETAINED
    if event == EVENT_DEATH:
        return RetentionLabel.NOT_RETAINED
    if event == EVENT_CENSOR:
        return RetentionLabel.NOT_RETAINED if w > s + delta else RetentionLabel.MISSING
    raise BadEventCode(f"event_type {event} not in {VALID_EVENT_CODES}")


@dataclass(frozen=True)
class SplineSpec:
    """Cubic b-spline expansion for one continuous covariate, fit per stratum."""

    covariate: str
    df: int = 4
    boundary: tuple[float, float] = (0.0, 1.0)
    interior: tuple[float, ...] = ()

    @classmethod
    def from_values(cls, covariate: str, values: np.ndarray, df: int = 4) -> "SplineSpec":
        values = np.asarray(values, dtype=float)
        lo, hi = float(values.min()), float(values.max())
        if hi <= lo:
            hi = lo + 1.0
        n_interior = max(df - 3, 0)
        qs = np.linspace(0, 1, n_interior + 2)[1:-1]
        interior = tuple(float(q) for q in np.quantile(values, qs))
        return cls(covariate=covariate, df=df, boundary=(lo, hi), interior=interior)

    def basis(self, values: np.ndarray) -> np.ndarray:
        """df columns; the first basis function is dropped because the
        stratum baseline hazard already carries the intercept."""
        lo, hi = self.boundary
        x = np.clip(np.asarray(values, dtype=float), lo, hi)
        t = np.concatenate([[lo] * 4, list(self.interior), [hi] * 4])
        design = BSpline.design_matrix(x, t, 3).toarray()
        return design[:, 1:]


def design_matrix(
    records: list[VisitRecord],
    covariate_names: tuple[str, ...],
    spline_covariates: tuple[str, ...] = (),
    spline_df: int = 4,
) -> tuple[np.ndarray, list[str], dict[str, SplineSpec]]:
    """Assemble the predictor matrix for one stratum's records.

    Columns: observed covariates under the shared monitoring pattern (in
    ``covariate_names`` order, b-spline expanded where designated), then
    prev_waiting and prev_schedule when the visit index exceeds 1. Returns
    the matrix, its column names, and the per-stratum spline knots fitted
    here (needed to build predictors for new subjects later).
    """
    assert records, "empty stratum"
    pattern = records[0].pattern
    assert all(r.pattern == pattern for r in records), "mixed monitoring patterns"
    j = records[0].visit_index

    columns: list[np.ndarray] = []
    names: list[str] = []
    specs: dict[str, SplineSpec] = {}
    for p, name in enumerate(covariate_names):
        if not pattern[p]:
            continue
        values = np.array([r.observed_value(p) for r in records])
        if name in spline_covariates:
            spec = SplineSpec.from_values(name, values, df=spline_df)
            specs[name] = spec
            basis = spec.basis(values)
            for b in range(basis.shape[1]):
                columns.append(basis[:, b])
                names.append(f"{name}_bs{b + 1}")
        else:
            columns.append(values)
            names.append(name)
    if j > 1:
        columns.append(np.array([r.prev_waiting for r in records], dtype=float))
        names.append("prev_waiting")
        columns.append(np.array([r.prev_schedule for r in records], dtype=float))
        names.append("prev_schedule")

    if columns:
        X = np.column_stack(columns)
    else:
        X = np.empty((len(records), 0))
    assert np.all(np.isfinite(X)), "design matrix read an unmonitored value"
    return X, names, specs
