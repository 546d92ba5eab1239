"""Effect estimators over analysis datasets.

Person-time rate ratio, a discrete-time hazard model fit by damped
Newton-Raphson logistic maximum likelihood, a cumulative-incidence
decomposition for competing events, and the exact design-level rate
ratio computed on the enumerated trajectory distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import ScenarioConfig, enumerate_exact
from .designs import AnalysisDataset, AnalysisRow, DesignError, DesignId, apply_design


class EstimationError(RuntimeError):
    """Base class for estimator failures."""


class ConvergenceError(EstimationError):
    pass


class SeparationError(EstimationError):
    pass


class SingularMatrixError(EstimationError):
    pass


SEPARATION_BOUND = 30.0
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class Estimate:
    """A log-scale effect estimate with a normal-approximation 95% CI.

    ``n_events`` and ``person_time`` are keyed by exposure stratum
    (1 = exposed, 0 = unexposed) and report the uncorrected totals;
    ``corrected`` flags the +0.5 continuity correction applied to both
    event counts when one stratum had none.
    """

    log_value: float
    se: float
    ci_low: float
    ci_high: float
    n_events: dict[int, float]
    person_time: dict[int, float]
    corrected: bool = False

    def __post_init__(self):
        if self.se < 0:
            raise ValueError("se must be non-negative")
        if not self.ci_low <= self.log_value <= self.ci_high:
            raise ValueError("confidence bounds must bracket the estimate")


def _stratum_totals(rows: list[AnalysisRow]) -> tuple[dict, dict]:
    events = {0: 0.0, 1: 0.0}
    person_time = {0: 0.0, 1: 0.0}
    acc: dict[int, list[list[float]]] = {0: [[], []], 1: [[], []]}
    for r in rows:
        acc[r.exposed][0].append(r.weight * r.event)
        acc[r.exposed][1].append(r.weight * (r.t_stop - r.t_start))
    for s in (0, 1):
        events[s] = math.fsum(acc[s][0])
        person_time[s] = math.fsum(acc[s][1])
    return events, person_time


def rate_ratio(data: AnalysisDataset) -> Estimate:
    """Person-time incidence rate ratio on the log scale.

    A zero event count in either stratum triggers a +0.5 continuity
    correction of both counts, flagged on the result.  Zero person-time
    in a stratum is an error.
    """
    events, person_time = _stratum_totals(data.rows)
    if person_time[1] <= 0.0 or person_time[0] <= 0.0:
        raise EstimationError("a stratum has zero person-time")
    a, b = events[1], events[0]
    corrected = a == 0.0 or b == 0.0
    if corrected:
        a += 0.5
        b += 0.5
    log_value = math.log((a / person_time[1]) / (b / person_time[0]))
    se = math.sqrt(1.0 / a + 1.0 / b)
    return Estimate(
        log_value=log_value,
        se=se,
        ci_low=log_value - Z_95 * se,
        ci_high=log_value + Z_95 * se,
        n_events=events,
        person_time=person_time,
        corrected=corrected,
    )


def logistic_loglik(predictors, outcomes, beta, weights=None) -> float:
    """Weighted Bernoulli log-likelihood under a logit link."""
    X = np.asarray(predictors, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    eta = X @ np.asarray(beta, dtype=float)
    return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))


def newton_raphson_logistic(
    predictors,
    outcomes,
    tolerance: float = 1e-8,
    max_iter: int = 50,
    weights=None,
    trace: list | None = None,
) -> list[float]:
    """Logistic ML coefficients by damped Newton-Raphson.

    Starts from the zero vector; each step is halved until the
    log-likelihood does not decrease (within the float resolution of
    the objective), and iteration stops when the gradient max-norm
    drops below ``tolerance``.  ``trace``, if given, collects the
    log-likelihood after every accepted step.  Raises
    ``SeparationError`` when a coefficient runs away (|b| > 30),
    ``SingularMatrixError`` on a rank-deficient information matrix, and
    ``ConvergenceError`` past ``max_iter`` iterations.
    """
    X = np.asarray(predictors, dtype=float)
    if X.ndim != 2:
        raise ValueError("predictors must be a 2-d record matrix")
    y = np.asarray(outcomes, dtype=float)
    n, p = X.shape
    if n < p:
        raise ValueError("need at least as many records as coefficients")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)

    beta = np.zeros(p)
    ll = logistic_loglik(X, y, beta, w)
    if trace is not None:
        trace.append(ll)
    for _ in range(max_iter):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        grad = X.T @ (w * (y - mu))
        if float(np.max(np.abs(grad))) < tolerance:
            return [float(b) for b in beta]
        info = (X * (w * mu * (1.0 - mu))[:, None]).T @ X
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise SingularMatrixError("singular information matrix")
        if not np.all(np.isfinite(step)):
            raise SingularMatrixError("non-finite Newton step")
        scale = 1.0
        slack = 1e-12 * (1.0 + abs(ll))  # float resolution of the objective
        for _ in range(50):
            candidate = beta + scale * step
            ll_new = logistic_loglik(X, y, candidate, w)
            if ll_new >= ll - slack:
                break
            scale *= 0.5
        else:
            raise ConvergenceError("step-halving failed to improve likelihood")
        beta = candidate
        ll = ll_new
        if trace is not None:
            trace.append(ll)
        if float(np.max(np.abs(beta))) > SEPARATION_BOUND:
            raise SeparationError(
                "coefficient diverged; data are separated or degenerate"
            )
    raise ConvergenceError(f"no convergence after {max_iter} iterations")


def expand_person_periods(
    data: AnalysisDataset,
    frailty: dict[int, int] | None = None,
):
    """Per-period records (X, y, w) for the discrete hazard model.

    Each interval row becomes one record per period; the event
    indicator lands on the final period of its row.  Columns are
    intercept, exposure code, and (when ``frailty`` is given) the
    subject's frailty indicator.
    """
    xs: list[list[float]] = []
    ys: list[float] = []
    ws: list[float] = []
    for r in data.rows:
        base = [1.0, float(r.exposed)]
        if frailty is not None:
            base = base + [float(frailty[r.subject])]
        for t in range(r.t_start, r.t_stop):
            xs.append(base)
            ys.append(float(r.event) if t == r.t_stop - 1 else 0.0)
            ws.append(r.weight)
    return np.asarray(xs), np.asarray(ys), np.asarray(ws)


def fit_discrete_hazard(
    data: AnalysisDataset,
    adjust_frailty: bool = False,
    frailty: dict[int, int] | None = None,
    tolerance: float = 1e-8,
    max_iter: int = 50,
) -> Estimate:
    """Exposure coefficient of a per-period logistic hazard model.

    Fits ``event ~ intercept + exposed`` (plus the frailty indicator
    when ``adjust_frailty``) on the person-period expansion and returns
    the exposed coefficient with its model-based standard error.
    """
    if adjust_frailty and frailty is None:
        raise EstimationError(
            "adjust_frailty requires the subject frailty mapping"
        )
    X, y, w = expand_person_periods(data, frailty if adjust_frailty else None)
    weighted_events = float(np.sum(w * y))
    if weighted_events == 0.0 or weighted_events == float(np.sum(w)):
        raise SeparationError("degenerate event column (all zero or all one)")
    beta = newton_raphson_logistic(X, y, tolerance, max_iter, weights=w)
    mu = 1.0 / (1.0 + np.exp(-(X @ np.asarray(beta))))
    info = (X * (w * mu * (1.0 - mu))[:, None]).T @ X
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("singular information matrix at the optimum")
    se = float(math.sqrt(cov[1, 1]))
    events, person_time = _stratum_totals(data.rows)
    log_value = float(beta[1])
    return Estimate(
        log_value=log_value,
        se=se,
        ci_low=log_value - Z_95 * se,
        ci_high=log_value + Z_95 * se,
        n_events=events,
        person_time=person_time,
    )


@dataclass
class CifCurves:
    """Per-stratum cumulative incidence under competing events.

    Grid point t covers everything recorded up to the period boundary
    t + 1.  ``naive_outcome`` is the complement of the event-specific
    survival, ignoring the competing process; ``truncated`` maps each
    stratum to the first grid point with nobody at risk (None when the
    curve runs the full grid).
    """

    grid: tuple[int, ...]
    cif_outcome: dict[int, tuple[float, ...]] = field(default_factory=dict)
    cif_cr: dict[int, tuple[float, ...]] = field(default_factory=dict)
    naive_outcome: dict[int, tuple[float, ...]] = field(default_factory=dict)
    truncated: dict[int, int | None] = field(default_factory=dict)


def cumulative_incidence(data: AnalysisDataset) -> CifCurves:
    """Discrete cumulative incidence decomposition per exposure stratum.

    CIF_k(t) accumulates S(t-) * h_k(t) with S the all-cause survival
    and h_k the cause-specific hazard estimated from the at-risk rows,
    so CIF_outcome + CIF_cr + S is identically one at every point.
    """
    if not data.rows:
        raise EstimationError("empty dataset")
    max_t = max(r.t_stop for r in data.rows)
    grid = tuple(range(max_t))
    strata = sorted({r.exposed for r in data.rows})
    curves = CifCurves(grid=grid)
    for s in strata:
        rows = [r for r in data.rows if r.exposed == s]
        at_risk = [0.0] * max_t
        d_out = [0.0] * max_t
        d_cr = [0.0] * max_t
        for r in rows:
            for t in range(r.t_start, r.t_stop):
                at_risk[t] += r.weight
            if r.event:
                d_out[r.t_stop - 1] += r.weight
            if r.cr_event:
                d_cr[r.t_stop - 1] += r.weight
        cif_o: list[float] = []
        cif_c: list[float] = []
        naive: list[float] = []
        surv = 1.0
        naive_surv = 1.0
        cum_o = cum_c = 0.0
        truncated_at = None
        for t in grid:
            if at_risk[t] <= 0.0:
                truncated_at = t
                break
            h_o = d_out[t] / at_risk[t]
            h_c = d_cr[t] / at_risk[t]
            cum_o += surv * h_o
            cum_c += surv * h_c
            surv *= 1.0 - h_o - h_c
            naive_surv *= 1.0 - h_o
            cif_o.append(cum_o)
            cif_c.append(cum_c)
            naive.append(1.0 - naive_surv)
        curves.cif_outcome[s] = tuple(cif_o)
        curves.cif_cr[s] = tuple(cif_c)
        curves.naive_outcome[s] = tuple(naive)
        curves.truncated[s] = truncated_at
    return curves


def exact_design_rate_ratio(
    config: ScenarioConfig,
    design: DesignId,
    tau: int | None = None,
    window: int | None = None,
) -> Estimate:
    """Exact rate-ratio estimand of a deterministic design.

    Pushes the enumerated trajectory distribution through the design
    compiler, weighting every row by its trajectory probability, so the
    returned estimate is the design's infinite-population value (no
    Monte Carlo error).  Unavailable for seeded designs.
    """
    if design is DesignId.PTDM:
        raise DesignError("exact estimand undefined for a seeded design")
    trajectories = enumerate_exact(config)
    cohort = [h for h, _ in trajectories]
    prob = [p for _, p in trajectories]
    dataset = apply_design(design, cohort, config.horizon, tau=tau, window=window)
    weighted = AnalysisDataset(
        rows=[r._replace(weight=r.weight * prob[r.subject]) for r in dataset.rows],
        design=dataset.design,
        provenance=dict(dataset.provenance, exact=True),
    )
    return rate_ratio(weighted)


ESTIMATE_CSV_HEADER = (
    "design,estimator,log_value,se,ci_low,ci_high,"
    "events_exposed,events_unexposed,pt_exposed,pt_unexposed,corrected_flag"
)


def estimate_csv_row(design: str, estimator: str, est: Estimate) -> str:
    fields = [
        design,
        estimator,
        repr(est.log_value),
        repr(est.se),
        repr(est.ci_low),
        repr(est.ci_high),
        repr(est.n_events[1]),
        repr(est.n_events[0]),
        repr(est.person_time[1]),
        repr(est.person_time[0]),
        "1" if est.corrected else "0",
    ]
    return ",".join(fields)
