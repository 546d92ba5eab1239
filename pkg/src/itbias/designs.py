"""Study-design compilers: cohort histories to person-period datasets.

Every compiler fixes a time zero per subject, codes exposure, applies
its eligibility filter, and emits analysis rows on the subject's own
analysis clock (t = 0 at that subject's time zero).  Rows follow the
recording convention of :mod:`itbias.cohort`: an interval
``[t_start, t_stop)`` is at-risk person-time and the event indicator
sits on the row whose ``t_stop`` is the event boundary.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from . import rng
from .cohort import PersonHistory


class DesignError(ValueError):
    """Missing parameters, empty comparison groups, or misuse."""


class DesignWarning(UserWarning):
    pass


class DesignId(str, Enum):
    EVER_EXPOSED_FULL = "EverExposedFull"
    SURVIVOR_ELIGIBILITY = "SurvivorEligibility"
    EXCLUDE_IMMORTAL_EXPOSURE = "ExcludeImmortalExposure"
    EXCLUDE_IMMORTAL_ELIGIBILITY = "ExcludeImmortalEligibility"
    ITT_ALIGNED = "IttAligned"
    PERSON_TIME_SPLIT = "PersonTimeSplit"
    TIME_DEPENDENT = "TimeDependent"
    SEQUENTIAL_TRIALS = "SequentialTrials"
    PTDM = "Ptdm"
    EXPOSURE_WINDOW_EXCLUSION = "ExposureWindowExclusion"


class AnalysisRow(NamedTuple):
    subject: int
    trial: int | None
    t_start: int
    t_stop: int
    exposed: int
    event: int
    cr_event: int
    weight: float


@dataclass
class AnalysisDataset:
    rows: list[AnalysisRow]
    design: DesignId
    provenance: dict = field(default_factory=dict)

    def person_time(self) -> float:
        return sum(r.weight * (r.t_stop - r.t_start) for r in self.rows)

    def validate(self, horizon: int) -> None:
        """Check the row invariants; raises DesignError on violation."""
        series: dict[tuple[int, int | None], list[AnalysisRow]] = {}
        for r in self.rows:
            if r.t_start >= r.t_stop:
                raise DesignError(f"empty interval in {r}")
            if r.weight < 0:
                raise DesignError(f"negative weight in {r}")
            if r.event and r.cr_event:
                raise DesignError(f"two terminal events in {r}")
            series.setdefault((r.subject, r.trial), []).append(r)
        for key, rows in series.items():
            if rows[0].t_start != 0:
                raise DesignError(f"series {key} does not start at time zero")
            for a, b in zip(rows, rows[1:]):
                if b.t_start != a.t_stop:
                    raise DesignError(f"series {key} has a gap or overlap")
                if a.event or a.cr_event:
                    raise DesignError(f"series {key} has an event before its end")
            if rows[-1].t_stop > horizon:
                raise DesignError(f"series {key} runs past the horizon")


def _end(h: PersonHistory, horizon: int) -> int:
    t = h.event_time
    return horizon if t is None else t


def _flags(h: PersonHistory) -> tuple[int, int]:
    return (int(h.outcome is not None), int(h.cr_event is not None))


def _series(h: PersonHistory, trial, t0: int, t_stop: int, exposed: int,
            censor_events: bool = False) -> list[AnalysisRow]:
    """One constant-exposure interval on the analysis clock."""
    ev, cr = (0, 0) if censor_events else _flags(h)
    return [AnalysisRow(h.id, trial, 0, t_stop - t0, exposed, ev, cr, 1.0)]


def _require(value, name: str, design: DesignId):
    if value is None:
        raise DesignError(f"{design.value} requires parameter {name!r}")
    return value


def _compile_ever_exposed_full(cohort, horizon, **_):
    rows = []
    for h in cohort:
        exposed = int(h.realized_award is not None)
        rows.extend(_series(h, None, 0, _end(h, horizon), exposed))
    return rows


def _compile_survivor_eligibility(cohort, horizon, tau=None, **_):
    tau = _require(tau, "tau", DesignId.SURVIVOR_ELIGIBILITY)
    rows = []
    for h in cohort:
        t = h.event_time
        if t is not None and t <= tau:
            continue
        exposed = int(h.realized_award is not None and h.realized_award < tau)
        rows.extend(_series(h, None, 0, _end(h, horizon), exposed))
    return rows


def _compile_exclude_immortal_exposure(cohort, horizon, **_):
    rows = []
    for h in cohort:
        if h.realized_award is not None:
            t0 = h.realized_award  # waiting time up to the award is dropped
            rows.append(AnalysisRow(
                h.id, None, 0, _end(h, horizon) - t0, 1, *_flags(h), 1.0
            ))
        else:
            rows.extend(_series(h, None, 0, _end(h, horizon), 0))
    return rows


def _compile_exclude_immortal_eligibility(cohort, horizon, tau=None, **_):
    tau = _require(tau, "tau", DesignId.EXCLUDE_IMMORTAL_ELIGIBILITY)
    return _shifted_eligibility(cohort, horizon, tau)


def _compile_exposure_window_exclusion(cohort, horizon, window=None, **_):
    window = _require(window, "window", DesignId.EXPOSURE_WINDOW_EXCLUSION)
    return _shifted_eligibility(cohort, horizon, window)


def _shifted_eligibility(cohort, horizon, cut):
    rows = []
    for h in cohort:
        t = h.event_time
        if t is not None and t <= cut:
            continue
        exposed = int(h.realized_award is not None and h.realized_award < cut)
        rows.append(AnalysisRow(
            h.id, None, 0, _end(h, horizon) - cut, exposed, *_flags(h), 1.0
        ))
    return rows


def _compile_itt_aligned(cohort, horizon, **_):
    rows = []
    for h in cohort:
        exposed = int(h.realized_award == 0)
        rows.extend(_series(h, None, 0, _end(h, horizon), exposed))
    if not any(r.exposed for r in rows):
        warnings.warn(
            "no exposures start at time zero; the baseline-exposure "
            "contrast is uninformative",
            DesignWarning,
        )
    return rows


def _compile_person_time_split(cohort, horizon, **_):
    rows = []
    for h in cohort:
        end = _end(h, horizon)
        a = h.realized_award
        ev, cr = _flags(h)
        if a is None:
            rows.append(AnalysisRow(h.id, None, 0, end, 0, ev, cr, 1.0))
        else:
            if a > 0:
                rows.append(AnalysisRow(h.id, None, 0, a, 0, 0, 0, 1.0))
            rows.append(AnalysisRow(h.id, None, a, end, 1, ev, cr, 1.0))
    return rows


def _compile_time_dependent(cohort, horizon, **_):
    rows = []
    for h in cohort:
        end = _end(h, horizon)
        a = h.realized_award
        ev, cr = _flags(h)
        for t in range(end):
            last = t == end - 1
            rows.append(AnalysisRow(
                h.id, None, t, t + 1,
                int(a is not None and a <= t),
                ev if last else 0, cr if last else 0, 1.0,
            ))
    return rows


def _compile_sequential_trials(cohort, horizon, **_):
    trial_starts = sorted({
        h.realized_award for h in cohort if h.realized_award is not None
    })
    rows = []
    for k in trial_starts:
        for h in cohort:
            t = h.event_time
            if t is not None and t <= k:
                continue  # event before this trial's baseline
            a = h.realized_award
            if a is not None and a < k:
                continue  # prior exposure excludes the subject
            if a == k:
                rows.extend(_series(h, k, k, _end(h, horizon), 1))
            elif a is None:
                rows.extend(_series(h, k, k, _end(h, horizon), 0))
            else:
                # later award: artificially censored at own exposure start
                rows.append(AnalysisRow(h.id, k, 0, a - k, 0, 0, 0, 1.0))
    return rows


def _compile_ptdm(cohort, horizon, seed=None, **_):
    seed = _require(seed, "seed", DesignId.PTDM)
    award_times = sorted(
        h.realized_award for h in cohort if h.realized_award is not None
    )
    if not award_times:
        raise DesignError("Ptdm requires at least one exposed subject")
    stream = rng.mix64(seed)
    rows = []
    for h in cohort:
        a = h.realized_award
        if a is not None:
            rows.extend(_series(h, None, a, _end(h, horizon), 1))
            continue
        # one uniform draw per control, keyed by subject id
        u = rng.uniform(stream, h.id, 0)
        t0 = award_times[int(u * len(award_times))]
        t = h.event_time
        if t is not None and t <= t0:
            continue  # event before the drawn time zero
        rows.extend(_series(h, None, t0, _end(h, horizon), 0))
    return rows


_COMPILERS = {
    DesignId.EVER_EXPOSED_FULL: _compile_ever_exposed_full,
    DesignId.SURVIVOR_ELIGIBILITY: _compile_survivor_eligibility,
    DesignId.EXCLUDE_IMMORTAL_EXPOSURE: _compile_exclude_immortal_exposure,
    DesignId.EXCLUDE_IMMORTAL_ELIGIBILITY: _compile_exclude_immortal_eligibility,
    DesignId.EXPOSURE_WINDOW_EXCLUSION: _compile_exposure_window_exclusion,
    DesignId.ITT_ALIGNED: _compile_itt_aligned,
    DesignId.PERSON_TIME_SPLIT: _compile_person_time_split,
    DesignId.TIME_DEPENDENT: _compile_time_dependent,
    DesignId.SEQUENTIAL_TRIALS: _compile_sequential_trials,
    DesignId.PTDM: _compile_ptdm,
}


def apply_design(
    design: DesignId,
    cohort: list[PersonHistory],
    horizon: int,
    tau: int | None = None,
    window: int | None = None,
    seed: int | None = None,
    provenance: dict | None = None,
) -> AnalysisDataset:
    """Compile a cohort through one study design.

    ``tau`` (eligibility period), ``window`` (exposure window length),
    and ``seed`` (control time-zero draws) are required by the designs
    that use them.  Raises ``DesignError`` when a comparison group ends
    up empty, except for ``IttAligned`` where an empty baseline-exposed
    arm is only warned about.
    """
    design = DesignId(design)
    for name, value in (("tau", tau), ("window", window)):
        if value is not None and not 0 < value < horizon:
            raise DesignError(f"{name} must lie strictly inside the horizon")
    rows = _COMPILERS[design](cohort, horizon, tau=tau, window=window, seed=seed)
    rows.sort(key=lambda r: (r.subject, -1 if r.trial is None else r.trial, r.t_start))
    if design is not DesignId.ITT_ALIGNED:
        has_exposed = any(r.exposed for r in rows)
        has_unexposed = any(not r.exposed for r in rows)
        if not (has_exposed and has_unexposed):
            missing = "exposed" if not has_exposed else "unexposed"
            raise DesignError(
                f"{design.value}: no {missing} person-time after filtering"
            )
    meta = {"design": design.value, "n_subjects": len(cohort), "horizon": horizon}
    if tau is not None:
        meta["tau"] = tau
    if window is not None:
        meta["window"] = window
    if seed is not None:
        meta["seed"] = seed
    if provenance:
        meta.update(provenance)
    return AnalysisDataset(rows=rows, design=design, provenance=meta)


_IMMORTAL_DESIGNS = {
    DesignId.EVER_EXPOSED_FULL,
    DesignId.SURVIVOR_ELIGIBILITY,
    DesignId.EXCLUDE_IMMORTAL_EXPOSURE,
    DesignId.EXCLUDE_IMMORTAL_ELIGIBILITY,
}


def immortal_time_total(
    cohort: list[PersonHistory],
    design: DesignId,
    tau: int | None = None,
) -> int:
    """Guaranteed-event-free person-time the design keeps in follow-up.

    Exposure-defined designs accumulate each winner's wait from its
    time zero to the award; eligibility-defined designs accumulate the
    span from each retained subject's time zero to the eligibility
    checkpoint.  Designs that move time zero past the immortal span
    total zero because the span is excluded rather than counted.
    """
    design = DesignId(design)
    if design not in _IMMORTAL_DESIGNS:
        raise DesignError(f"{design.value} has no immortal-time notion")
    if design is DesignId.EVER_EXPOSED_FULL:
        return sum(
            h.realized_award for h in cohort if h.realized_award is not None
        )
    if design is DesignId.EXCLUDE_IMMORTAL_EXPOSURE:
        return 0
    tau = _require(tau, "tau", design)
    retained = sum(
        1 for h in cohort if h.event_time is None or h.event_time > tau
    )
    if design is DesignId.SURVIVOR_ELIGIBILITY:
        return retained * tau
    return 0  # ExcludeImmortalEligibility: span excluded from follow-up


DATASET_CSV_HEADER = ["subject", "trial", "t_start", "t_stop",
                      "exposed", "event", "cr_event", "weight"]


def write_dataset_csv(dataset: AnalysisDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_CSV_HEADER)
        for r in dataset.rows:
            writer.writerow([
                r.subject,
                "" if r.trial is None else r.trial,
                r.t_start, r.t_stop, r.exposed, r.event, r.cr_event,
                repr(r.weight),
            ])


def read_dataset_csv(path, design: DesignId | None = None) -> AnalysisDataset:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_CSV_HEADER:
            raise DesignError(f"unexpected dataset header: {header}")
        for raw in reader:
            rows.append(AnalysisRow(
                int(raw[0]),
                None if raw[1] == "" else int(raw[1]),
                int(raw[2]), int(raw[3]), int(raw[4]), int(raw[5]), int(raw[6]),
                float(raw[7]),
            ))
    return AnalysisDataset(rows=rows, design=design or DesignId.EVER_EXPOSED_FULL)
