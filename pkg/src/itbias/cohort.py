"""Synthetic cohort generator and truth oracles.

Discrete time: periods 0..T-1, one year each.  Award (exposure) onset
happens at the start of a period and is recorded as that period index;
terminal events drawn during period t are recorded at the period-end
boundary t+1, so recorded event times run 1..T and exposure onset
always strictly precedes any recorded event of the same subject.

Exposure onset is gated by survival: a scheduled award realizes only if
the subject is alive and event-free when the schedule comes up.  That
gate is the mechanism every flawed design downstream mis-handles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import rng


class ConfigError(ValueError):
    """Invalid scenario configuration or exhausted enumeration budget."""


class OracleError(RuntimeError):
    """Raised when a truth oracle cannot produce a usable estimate."""


CLAMP_FRACTION_LIMIT = 0.01
_ENUM_HORIZON_CAP = 6
_ENUM_HORIZON_CAP_COMPETING = 4


@dataclass(frozen=True)
class CompetingConfig:
    """Hazards for a non-mortality outcome with a competing event."""

    base_outcome_hazard: float
    base_cr_hazard: float
    log_effect_on_cr: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Generative law of one cohort.

    ``award_probability`` is the chance of being on the award track;
    ``award_delay`` is the per-period chance that a tracked subject's
    award is scheduled to land.  ``log_effect`` multiplies the primary
    event hazard once exposed, ``log_frailty_effect`` multiplies every
    event hazard for frail (u = 1) subjects.  ``competing`` switches
    the terminal process from a single mortality outcome to a primary
    event plus a competing event.
    """

    n_subjects: int = 10_000
    horizon: int = 4
    frailty_prevalence: float = 0.4
    award_probability: float = 0.4
    award_delay: float = 0.5
    base_death_hazard: float = 0.08
    log_effect: float = -0.3
    log_frailty_effect: float = math.log(3.0)
    competing: CompetingConfig | None = None
    eligibility_age: int = 2

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ConfigError("n_subjects must be positive")
        if self.horizon < 2:
            raise ConfigError("horizon must be at least 2")
        if not 0 <= self.eligibility_age < self.horizon:
            raise ConfigError("eligibility_age must lie inside the horizon")
        for name in ("frailty_prevalence", "award_probability", "award_delay"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {p}")
        hazards = [("base_death_hazard", self.base_death_hazard)]
        if self.competing is not None:
            hazards += [
                ("base_outcome_hazard", self.competing.base_outcome_hazard),
                ("base_cr_hazard", self.competing.base_cr_hazard),
            ]
        for name, h in hazards:
            # 0 is allowed for degenerate no-event scenarios; 1 is not.
            if not 0.0 <= h < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {h}")


class PersonHistory(NamedTuple):
    """One simulated subject.

    ``scheduled_award``/``realized_award`` are period-start instants in
    0..T-1; ``death``/``outcome``/``cr_event`` are period-end
    boundaries in 1..T.  Without a competing process the primary event
    is death and ``outcome == death``; with one, ``outcome`` is the
    primary event, ``cr_event`` the competing event, and ``death`` is
    unused (the competing event is itself terminal).
    """

    id: int
    u: int
    scheduled_award: int | None
    realized_award: int | None
    death: int | None
    outcome: int | None
    cr_event: int | None

    @property
    def event_time(self) -> int | None:
        """Earliest terminal event boundary, None if event-free."""
        times = [t for t in (self.outcome, self.cr_event) if t is not None]
        return min(times) if times else None


class Estimand(Enum):
    MARGINAL_LOG_RATE_RATIO = "marginal-log-rate-ratio"
    CONDITIONAL_LOG_HAZARD_RATIO = "conditional-log-hazard-ratio"


@dataclass(frozen=True)
class TrueEffect:
    estimand: Estimand
    value: float
    mc_se: float

    def __post_init__(self):
        if self.mc_se < 0:
            raise ValueError("mc_se must be non-negative")


# Draw layout per subject: 0 frailty, 1 award track, 2..2+T-1 schedule
# delay, then two event slots per period.  The layout is fixed up front
# so that changing one hazard leaves every other draw untouched
# (common random numbers across configs).
def _n_draws(horizon: int) -> int:
    return 2 + 3 * horizon


def _delay_slot(t: int) -> int:
    return 2 + t


def _event_slot(horizon: int, t: int) -> int:
    return 2 + horizon + 2 * t


class _ClampCounter:
    __slots__ = ("clamped", "draws")

    def __init__(self):
        self.clamped = 0
        self.draws = 0

    def check(self):
        if self.draws and self.clamped > CLAMP_FRACTION_LIMIT * self.draws:
            frac = self.clamped / self.draws
            raise ConfigError(
                f"hazard clamp triggered on {frac:.1%} of draws; "
                "effect sizes too extreme for the base hazards"
            )


def _hazard(base, log_terms, counter: _ClampCounter, alive: np.ndarray):
    h = base * np.exp(log_terms)
    over = h > 1.0
    if np.any(over):
        counter.clamped += int(np.count_nonzero(over & alive))
        h = np.minimum(h, 1.0)
    counter.draws += int(np.count_nonzero(alive))
    return h


def simulate_cohort(config: ScenarioConfig, seed: int) -> list[PersonHistory]:
    """Simulate one cohort, deterministic in ``(config, seed)``.

    Output is ordered by subject index.  Raises ``ConfigError`` when
    hazard clamping exceeds the tolerated fraction of draws.
    """
    n, T = config.n_subjects, config.horizon
    uni = rng.uniform_matrix(seed, n, _n_draws(T))
    frail = uni[:, 0] < config.frailty_prevalence
    track = uni[:, 1] < config.award_probability
    delay_hit = uni[:, 2:2 + T] < config.award_delay
    has_schedule = track & delay_hit.any(axis=1)
    schedule = np.where(has_schedule, delay_hit.argmax(axis=1), -1)

    alive = np.ones(n, dtype=bool)
    realized = np.full(n, -1, dtype=np.int64)
    out_time = np.full(n, -1, dtype=np.int64)
    cr_time = np.full(n, -1, dtype=np.int64)
    counter = _ClampCounter()
    competing = config.competing
    base_primary = (
        competing.base_outcome_hazard if competing else config.base_death_hazard
    )
    frailty_term = config.log_frailty_effect * frail

    for t in range(T):
        due = alive & (schedule == t)
        realized[due] = t
        exposed = realized >= 0
        h = _hazard(
            base_primary,
            config.log_effect * exposed + frailty_term,
            counter,
            alive,
        )
        hit = alive & (uni[:, _event_slot(T, t)] < h)
        out_time[hit] = t + 1
        alive &= ~hit
        if competing is not None:
            h_cr = _hazard(
                competing.base_cr_hazard,
                competing.log_effect_on_cr * exposed + frailty_term,
                counter,
                alive,
            )
            hit_cr = alive & (uni[:, _event_slot(T, t) + 1] < h_cr)
            cr_time[hit_cr] = t + 1
            alive &= ~hit_cr
    counter.check()

    cohort = []
    for i in range(n):
        out = int(out_time[i]) if out_time[i] >= 0 else None
        cr = int(cr_time[i]) if cr_time[i] >= 0 else None
        cohort.append(PersonHistory(
            id=i,
            u=int(frail[i]),
            scheduled_award=int(schedule[i]) if schedule[i] >= 0 else None,
            realized_award=int(realized[i]) if realized[i] >= 0 else None,
            death=None if competing is not None else out,
            outcome=out,
            cr_event=cr,
        ))
    return cohort


def _clamp01(h: float) -> float:
    return h if h <= 1.0 else 1.0


def enumerate_exact(config: ScenarioConfig) -> list[tuple[PersonHistory, float]]:
    """Exact distribution over observable trajectories.

    Returns every distinct ``PersonHistory`` (id = trajectory index)
    with its probability under the generative law.  Restricted to
    horizons small enough to enumerate.
    """
    T = config.horizon
    competing = config.competing
    cap = _ENUM_HORIZON_CAP_COMPETING if competing else _ENUM_HORIZON_CAP
    if T > cap:
        raise ConfigError(
            f"exact enumeration supports horizon <= {cap} "
            f"({'with' if competing else 'without'} a competing process)"
        )
    a, d = config.award_probability, config.award_delay
    base_primary = (
        competing.base_outcome_hazard if competing else config.base_death_hazard
    )
    schedule_branches: list[tuple[int | None, float]] = [
        (None, (1.0 - a) + a * (1.0 - d) ** T)
    ]
    schedule_branches += [(k, a * d * (1.0 - d) ** k) for k in range(T)]

    results: list[tuple[PersonHistory, float]] = []

    def emit(u, scheduled, realized, out, cr, prob):
        if prob == 0.0:
            return
        results.append((
            PersonHistory(
                id=len(results),
                u=u,
                scheduled_award=scheduled,
                realized_award=realized,
                death=None if competing is not None else out,
                outcome=out,
                cr_event=cr,
            ),
            prob,
        ))

    def sweep(u, scheduled, t, realized, prob):
        if prob == 0.0:
            return
        if t == T:
            emit(u, scheduled, realized, None, None, prob)
            return
        if realized is None and scheduled == t:
            realized = t
        exposed = realized is not None
        frailty = config.log_frailty_effect * u
        h = _clamp01(
            base_primary * math.exp(config.log_effect * exposed + frailty)
        )
        emit(u, scheduled, realized, t + 1, None, prob * h)
        live = prob * (1.0 - h)
        if competing is not None:
            h_cr = _clamp01(
                competing.base_cr_hazard
                * math.exp(competing.log_effect_on_cr * exposed + frailty)
            )
            emit(u, scheduled, realized, None, t + 1, live * h_cr)
            live *= 1.0 - h_cr
        sweep(u, scheduled, t + 1, realized, live)

    for u, pu in ((0, 1.0 - config.frailty_prevalence), (1, config.frailty_prevalence)):
        for scheduled, ps in schedule_branches:
            sweep(u, scheduled, 0, None, pu * ps)
    return results


def _arm_rate_exact(config: ScenarioConfig, exposed: int) -> tuple[float, float]:
    """Expected (events, person-time) per subject with exposure forced."""
    T = config.horizon
    competing = config.competing
    base_primary = (
        competing.base_outcome_hazard if competing else config.base_death_hazard
    )
    events = 0.0
    person_time = 0.0
    for u, pu in ((0, 1.0 - config.frailty_prevalence), (1, config.frailty_prevalence)):
        frailty = config.log_frailty_effect * u
        surv = 1.0
        for _ in range(T):
            h = _clamp01(
                base_primary * math.exp(config.log_effect * exposed + frailty)
            )
            person_time += pu * surv
            events += pu * surv * h
            surv *= 1.0 - h
            if competing is not None:
                h_cr = _clamp01(
                    competing.base_cr_hazard
                    * math.exp(competing.log_effect_on_cr * exposed + frailty)
                )
                surv *= 1.0 - h_cr
    return events, person_time


def exact_true_effect(config: ScenarioConfig) -> TrueEffect:
    """Closed-form marginal log rate ratio, exposure forced vs withheld.

    The survival gate on exposure onset is disabled in both arms, so
    this is the causal baseline every design-level estimand is
    compared against.
    """
    ev1, pt1 = _arm_rate_exact(config, 1)
    ev0, pt0 = _arm_rate_exact(config, 0)
    if ev1 == 0.0 or ev0 == 0.0:
        raise OracleError("zero expected events in a counterfactual arm")
    value = math.log((ev1 / pt1) / (ev0 / pt0))
    return TrueEffect(Estimand.MARGINAL_LOG_RATE_RATIO, value, 0.0)


def oracle_true_effect(config: ScenarioConfig, seed: int, n: int) -> TrueEffect:
    """Monte Carlo marginal log rate ratio with common random numbers.

    Both counterfactual arms (exposure forced from period 0 vs never
    exposed, survival gate disabled) reuse the same per-subject draws.
    ``mc_se`` comes from the per-subject influence decomposition of the
    log ratio, which respects the arm coupling.
    """
    if n < 2:
        raise OracleError("need at least 2 subjects for a Monte Carlo se")
    T = config.horizon
    competing = config.competing
    base_primary = (
        competing.base_outcome_hazard if competing else config.base_death_hazard
    )
    uni = rng.uniform_matrix(seed, n, 1 + 2 * T)
    frail = uni[:, 0] < config.frailty_prevalence
    frailty_term = config.log_frailty_effect * frail
    counter = _ClampCounter()

    per_arm: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for exposed in (1, 0):
        alive = np.ones(n, dtype=bool)
        events = np.zeros(n)
        person_time = np.zeros(n)
        for t in range(T):
            h = _hazard(
                base_primary,
                config.log_effect * exposed + frailty_term,
                counter,
                alive,
            )
            person_time += alive
            hit = alive & (uni[:, 1 + 2 * t] < h)
            events += hit
            alive &= ~hit
            if competing is not None:
                h_cr = _hazard(
                    competing.base_cr_hazard,
                    competing.log_effect_on_cr * exposed + frailty_term,
                    counter,
                    alive,
                )
                alive &= ~(alive & (uni[:, 2 + 2 * t] < h_cr))
        per_arm[exposed] = (events, person_time)
    counter.check()

    e1, p1 = per_arm[1]
    e0, p0 = per_arm[0]
    if e1.sum() == 0 or e0.sum() == 0:
        raise OracleError("zero events in a counterfactual arm")
    value = math.log((e1.sum() / p1.sum()) / (e0.sum() / p0.sum()))
    psi = (
        (e1 - e1.mean()) / e1.mean()
        - (p1 - p1.mean()) / p1.mean()
        - (e0 - e0.mean()) / e0.mean()
        + (p0 - p0.mean()) / p0.mean()
    )
    mc_se = float(psi.std(ddof=1) / math.sqrt(n))
    return TrueEffect(Estimand.MARGINAL_LOG_RATE_RATIO, value, mc_se)


COHORT_CSV_HEADER = ["id", "u", "scheduled_award", "realized_award",
                     "death", "outcome", "cr_event"]


def write_cohort_csv(cohort: list[PersonHistory], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COHORT_CSV_HEADER)
        for h in cohort:
            writer.writerow(["" if v is None else v for v in h])


def read_cohort_csv(path) -> list[PersonHistory]:
    def cell(v: str) -> int | None:
        return None if v == "" else int(v)

    cohort = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != COHORT_CSV_HEADER:
            raise ConfigError(f"unexpected cohort header: {header}")
        for row in reader:
            if len(row) != len(COHORT_CSV_HEADER):
                raise ConfigError(f"malformed cohort row: {row}")
            cohort.append(PersonHistory(*(cell(v) for v in row)))
    return cohort
