"""Experiment harness: config files, replicate runs, report rendering.

Config files are line-oriented ``key = value`` text under ``[section]``
headers; sections are ``[scenario]``, optional ``[competing]``,
``[experiment]``, and one ``[design]`` block per configured design run.
Unknown sections or keys are hard errors.

Seed derivation from the master seed uses :func:`itbias.rng.mix64`:
``replicate_seed(m, r) = mix64(m, 0x7265706C69636174, r)`` and
``oracle_seed(m) = mix64(m, 0x6F7261636C65)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .cohort import (
    CompetingConfig,
    Estimand,
    ScenarioConfig,
    TrueEffect,
    oracle_true_effect,
    simulate_cohort,
)
from .designs import DesignId, apply_design
from .estimators import Estimate, fit_discrete_hazard, rate_ratio
from .rng import mix64

_REPLICATE_TAG = 0x7265706C69636174
_ORACLE_TAG = 0x6F7261636C65

ESTIMATOR_IDS = ("rate_ratio", "discrete_hazard", "discrete_hazard_frailty")


class ConfigFileError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


def replicate_seed(master_seed: int, replicate: int) -> int:
    return mix64(master_seed, _REPLICATE_TAG, replicate)


def oracle_seed(master_seed: int) -> int:
    return mix64(master_seed, _ORACLE_TAG)


@dataclass(frozen=True)
class DesignRun:
    design: DesignId
    estimator: str = "rate_ratio"
    tau: int | None = None
    window: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATOR_IDS:
            raise ConfigFileError(f"unknown estimator {self.estimator!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.design.value, self.estimator)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    designs: tuple[DesignRun, ...]
    replicates: int
    master_seed: int
    oracle_n: int
    output_dir: str = "out"

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigFileError("replicates must be at least 1")
        if not self.designs:
            raise ConfigFileError("at least one design run is required")


@dataclass(frozen=True)
class DesignSummary:
    design: str
    estimator: str
    mean_log_estimate: float
    empirical_sd: float
    bias: float
    bias_mc_error: float
    frac_negative: float
    ci_coverage: float
    corrected_replicates: int
    replicates: int


@dataclass(frozen=True)
class ExperimentReport:
    oracle: TrueEffect
    conditional_log_hazard: float
    summaries: tuple[DesignSummary, ...]
    master_seed: int
    replicates: int
    provenance: dict


# ---------------------------------------------------------------------------
# config file parsing

_SCENARIO_INT = {"n_subjects", "horizon", "eligibility_age"}
_SCENARIO_FLOAT = {
    "frailty_prevalence",
    "award_probability",
    "award_delay",
    "base_death_hazard",
    "log_effect",
    "log_frailty_effect",
}
_COMPETING_FLOAT = {"base_outcome_hazard", "base_cr_hazard", "log_effect_on_cr"}
_EXPERIMENT_KEYS = {"replicates", "master_seed", "oracle_n", "output_dir"}
_DESIGN_KEYS = {"id", "estimator", "tau", "window", "seed"}
_SECTIONS = {"scenario", "competing", "experiment", "design"}


def parse_config_text(text: str) -> list[tuple[str, dict[str, str]]]:
    """Split config text into (section, key-value dict) blocks, in order."""
    sections: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigFileError(f"line {lineno}: unknown section [{name}]")
            current = {}
            sections.append((name, current))
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {lineno}: expected 'key = value'")
        if current is None:
            raise ConfigFileError(f"line {lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in current:
            raise ConfigFileError(f"line {lineno}: duplicate key {key!r}")
        current[key] = value
    return sections


def _coerce(section: str, key: str, value: str, kind):
    try:
        return kind(value)
    except ValueError:
        raise ConfigFileError(
            f"[{section}] {key}: cannot parse {value!r} as {kind.__name__}"
        )


def _build_scenario(sections) -> ScenarioConfig:
    scenario_blocks = [d for name, d in sections if name == "scenario"]
    competing_blocks = [d for name, d in sections if name == "competing"]
    if len(scenario_blocks) != 1:
        raise ConfigFileError("exactly one [scenario] section is required")
    if len(competing_blocks) > 1:
        raise ConfigFileError("at most one [competing] section is allowed")
    kwargs = {}
    for key, value in scenario_blocks[0].items():
        if key in _SCENARIO_INT:
            kwargs[key] = _coerce("scenario", key, value, int)
        elif key in _SCENARIO_FLOAT:
            kwargs[key] = _coerce("scenario", key, value, float)
        else:
            raise ConfigFileError(f"[scenario] unknown key {key!r}")
    if competing_blocks:
        ckwargs = {}
        for key, value in competing_blocks[0].items():
            if key in _COMPETING_FLOAT:
                ckwargs[key] = _coerce("competing", key, value, float)
            else:
                raise ConfigFileError(f"[competing] unknown key {key!r}")
        kwargs["competing"] = CompetingConfig(**ckwargs)
    return ScenarioConfig(**kwargs)


def _build_design(block: dict[str, str]) -> DesignRun:
    if "id" not in block:
        raise ConfigFileError("[design] requires an 'id' key")
    kwargs = {}
    for key, value in block.items():
        if key not in _DESIGN_KEYS:
            raise ConfigFileError(f"[design] unknown key {key!r}")
        if key == "id":
            try:
                kwargs["design"] = DesignId(value)
            except ValueError:
                raise ConfigFileError(f"[design] unknown design id {value!r}")
        elif key == "estimator":
            kwargs["estimator"] = value
        else:
            kwargs[key] = _coerce("design", key, value, int)
    return DesignRun(**kwargs)


def load_scenario_config(path) -> ScenarioConfig:
    """Scenario from a config file; experiment sections are ignored."""
    sections = parse_config_text(Path(path).read_text())
    return _build_scenario(sections)


def load_experiment_config(path, output_dir: str | None = None) -> ExperimentConfig:
    sections = parse_config_text(Path(path).read_text())
    scenario = _build_scenario(sections)
    experiment_blocks = [d for name, d in sections if name == "experiment"]
    if len(experiment_blocks) != 1:
        raise ConfigFileError("exactly one [experiment] section is required")
    block = experiment_blocks[0]
    for key in block:
        if key not in _EXPERIMENT_KEYS:
            raise ConfigFileError(f"[experiment] unknown key {key!r}")
    designs = tuple(
        _build_design(d) for name, d in sections if name == "design"
    )
    return ExperimentConfig(
        scenario=scenario,
        designs=designs,
        replicates=_coerce("experiment", "replicates",
                           block.get("replicates", "1"), int),
        master_seed=_coerce("experiment", "master_seed",
                            block.get("master_seed", "0"), int),
        oracle_n=_coerce("experiment", "oracle_n",
                         block.get("oracle_n", "100000"), int),
        output_dir=output_dir or block.get("output_dir", "out"),
    )


# ---------------------------------------------------------------------------
# harness

def _estimate(run: DesignRun, dataset, cohort) -> Estimate:
    if run.estimator == "rate_ratio":
        return rate_ratio(dataset)
    if run.estimator == "discrete_hazard":
        return fit_discrete_hazard(dataset)
    frailty = {h.id: h.u for h in cohort}
    return fit_discrete_hazard(dataset, adjust_frailty=True, frailty=frailty)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Oracle once, then replicate simulate/compile/estimate sweeps.

    Aggregation reduces per-replicate arrays in replicate order with
    exact summation, so results do not depend on any execution order.
    """
    oracle = oracle_true_effect(
        config.scenario, oracle_seed(config.master_seed), config.oracle_n
    )
    estimates: dict[tuple[str, str], list[Estimate]] = {
        run.key: [] for run in config.designs
    }
    if len(estimates) != len(config.designs):
        raise ConfigFileError("duplicate (design, estimator) runs")
    for r in range(config.replicates):
        seed = replicate_seed(config.master_seed, r)
        try:
            cohort = simulate_cohort(config.scenario, seed)
        except Exception as exc:
            raise ExperimentError(f"simulation, replicate {r}: {exc}") from exc
        for run in config.designs:
            try:
                dataset = apply_design(
                    run.design,
                    cohort,
                    config.scenario.horizon,
                    tau=run.tau,
                    window=run.window,
                    seed=run.seed,
                )
                estimates[run.key].append(_estimate(run, dataset, cohort))
            except Exception as exc:
                raise ExperimentError(
                    f"design {run.design.value} ({run.estimator}), "
                    f"replicate {r}: {exc}"
                ) from exc

    summaries = []
    for run in config.designs:
        ests = estimates[run.key]
        values = [e.log_value for e in ests]
        n = len(values)
        mean = math.fsum(values) / n
        if n > 1:
            sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
            mc_error = sd / math.sqrt(n)
        else:
            sd = 0.0
            mc_error = ests[0].se  # single replicate: model-based stand-in
        coverage = math.fsum(
            1.0 for e in ests if e.ci_low <= oracle.value <= e.ci_high
        ) / n
        summaries.append(DesignSummary(
            design=run.design.value,
            estimator=run.estimator,
            mean_log_estimate=mean,
            empirical_sd=sd,
            bias=mean - oracle.value,
            bias_mc_error=mc_error,
            frac_negative=sum(1 for v in values if v < 0.0) / n,
            ci_coverage=coverage,
            corrected_replicates=sum(1 for e in ests if e.corrected),
            replicates=n,
        ))
    return ExperimentReport(
        oracle=oracle,
        conditional_log_hazard=config.scenario.log_effect,
        summaries=tuple(summaries),
        master_seed=config.master_seed,
        replicates=config.replicates,
        provenance={
            "scenario": asdict(config.scenario),
            "designs": [
                {
                    "design": run.design.value,
                    "estimator": run.estimator,
                    "tau": run.tau,
                    "window": run.window,
                    "seed": run.seed,
                }
                for run in config.designs
            ],
            "oracle_n": config.oracle_n,
        },
    )


# ---------------------------------------------------------------------------
# rendering

REPORT_CSV_HEADER = [
    "design", "estimator", "mean_log_estimate", "empirical_sd", "bias",
    "bias_mc_error", "frac_negative", "ci_coverage", "corrected_replicates",
    "replicates", "oracle_log_value", "oracle_mc_se", "conditional_log_hazard",
]


def render_report(
    report: ExperimentReport,
    out_dir,
    formats: tuple[str, ...] = ("csv", "svg"),
) -> list[Path]:
    """Write report artifacts; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out / "report.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_CSV_HEADER)
            for s in report.summaries:
                writer.writerow([
                    s.design, s.estimator,
                    repr(s.mean_log_estimate), repr(s.empirical_sd),
                    repr(s.bias), repr(s.bias_mc_error),
                    repr(s.frac_negative), repr(s.ci_coverage),
                    s.corrected_replicates, s.replicates,
                    repr(report.oracle.value), repr(report.oracle.mc_se),
                    repr(report.conditional_log_hazard),
                ])
        written.append(path)
    if "svg" in formats:
        path = out / "report.svg"
        path.write_text(render_svg(report))
        written.append(path)
    return written


def parse_report_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != REPORT_CSV_HEADER:
            raise ConfigFileError(f"unexpected report header: {header}")
        for raw in reader:
            row = dict(zip(header, raw))
            for key in header[2:]:
                if key in ("corrected_replicates", "replicates"):
                    row[key] = int(row[key])
                else:
                    row[key] = float(row[key])
            rows.append(row)
    return rows


def render_svg(report: ExperimentReport) -> str:
    """Dot-and-interval chart of bias per (design, estimator) run."""
    rows = report.summaries
    width, left, right = 760.0, 250.0, 40.0
    row_h, top, bottom = 28.0, 48.0, 36.0
    height = top + row_h * len(rows) + bottom
    lo = min([0.0] + [s.bias - 1.96 * s.bias_mc_error for s in rows])
    hi = max([0.0] + [s.bias + 1.96 * s.bias_mc_error for s in rows])
    if hi == lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo -= pad
    hi += pad
    span = width - left - right

    def x(v: float) -> float:
        return left + (v - lo) / (hi - lo) * span

    def fmt(v: float) -> str:
        return f"{v:.4f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        '<style>text { font: 12px monospace; }</style>',
        f'<text x="{left:.1f}" y="20">bias of mean log estimate vs oracle '
        f'truth {fmt(report.oracle.value)}</text>',
        f'<line x1="{x(0.0):.2f}" y1="{top - 10:.1f}" x2="{x(0.0):.2f}" '
        f'y2="{height - bottom + 10:.1f}" stroke="#888" stroke-dasharray="4 3"/>',
    ]
    for i, s in enumerate(rows):
        cy = top + row_h * (i + 0.5)
        x_lo = x(s.bias - 1.96 * s.bias_mc_error)
        x_hi = x(s.bias + 1.96 * s.bias_mc_error)
        label = f"{s.design}/{s.estimator}"
        parts.append(
            f'<text x="8" y="{cy + 4:.2f}">{label}</text>'
        )
        parts.append(
            f'<line x1="{x_lo:.2f}" y1="{cy:.2f}" x2="{x_hi:.2f}" '
            f'y2="{cy:.2f}" stroke="#335" stroke-width="2"/>'
        )
        parts.append(
            f'<circle class="marker" cx="{x(s.bias):.2f}" cy="{cy:.2f}" '
            f'r="4" fill="#c33"/>'
        )
        parts.append(
            f'<text x="{width - right + 4:.1f}" y="{cy + 4:.2f}">'
            f'{fmt(s.bias)}</text>'
        )
    axis_y = height - bottom + 14
    parts.append(f'<text x="{left:.1f}" y="{axis_y:.1f}">{fmt(lo)}</text>')
    parts.append(
        f'<text x="{width - right - 60:.1f}" y="{axis_y:.1f}">{fmt(hi)}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
