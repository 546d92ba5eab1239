"""Command-line surface.

Subcommands::

    itbias dag check <builtin-id | file.dag>
    itbias simulate --config FILE --seed S --out FILE
    itbias analyze --design D --estimator E --cohort FILE
                   [--tau K] [--window K] [--seed S] [--horizon T] [--out FILE]
    itbias experiment --config FILE --out DIR
                      [--replicates R] [--format csv|svg|both]

Exit codes: 0 success, 1 usage error, 2 data/convergence/check error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import figures, graphs
from .cohort import ConfigError, OracleError, read_cohort_csv, simulate_cohort, write_cohort_csv
from .designs import DesignError, DesignId, apply_design
from .estimators import (
    ESTIMATE_CSV_HEADER,
    EstimationError,
    estimate_csv_row,
    fit_discrete_hazard,
    rate_ratio,
)
from .experiment import (
    ESTIMATOR_IDS,
    ConfigFileError,
    ExperimentError,
    load_experiment_config,
    load_scenario_config,
    render_report,
    run_experiment,
)

_DATA_ERRORS = (
    graphs.DagError,
    figures.UnsupportedDesignError,
    ConfigError,
    OracleError,
    DesignError,
    EstimationError,
    ConfigFileError,
    ExperimentError,
    OSError,
)


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="itbias", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    dag = sub.add_parser("dag", help="graph tooling")
    dag_sub = dag.add_subparsers(dest="dag_command", required=True, parser_class=_Parser)
    check = dag_sub.add_parser(
        "check",
        help="classify a builtin scenario or a DAG text file",
    )
    check.add_argument("target", help="builtin scenario id or path to a .dag file")
    check.add_argument("--exposures", default="E0,E1",
                       help="comma-separated exposure nodes for file targets")
    check.add_argument("--outcome", default="D1+",
                       help="outcome node for file targets")

    simulate = sub.add_parser("simulate",
                              help="simulate one cohort to CSV")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--seed", required=True, type=int)
    simulate.add_argument("--out", required=True)

    analyze = sub.add_parser("analyze",
                             help="compile a cohort through a design and estimate")
    analyze.add_argument("--design", required=True,
                         choices=[d.value for d in DesignId])
    analyze.add_argument("--estimator", default="rate_ratio",
                         choices=list(ESTIMATOR_IDS))
    analyze.add_argument("--cohort", required=True)
    analyze.add_argument("--tau", type=int)
    analyze.add_argument("--window", type=int)
    analyze.add_argument("--seed", type=int)
    analyze.add_argument("--horizon", type=int,
                         help="follow-up horizon; default: largest recorded "
                              "event boundary in the cohort")
    analyze.add_argument("--out", help="write the estimate CSV here instead "
                                       "of stdout")

    experiment = sub.add_parser("experiment",
                                help="run a replicate experiment")
    experiment.add_argument("--config", required=True)
    experiment.add_argument("--out", required=True)
    experiment.add_argument("--replicates", type=int)
    experiment.add_argument("--format", choices=["csv", "svg", "both"],
                            default="both")
    return parser


def _print_paths(dag, exposures, outcome, out) -> None:
    for e in sorted(exposures, key=lambda v: v.label):
        print(f"paths {e} .. {outcome}:", file=out)
        for p in graphs.open_paths(dag, e, outcome, dag.conditioned):
            mark = "open  " if p.is_open else "blocked"
            print(f"  [{mark}] {p.describe()}  ({p.classification.value})",
                  file=out)


def _cmd_dag_check(args, out=None) -> int:
    out = out if out is not None else sys.stdout
    target = args.target
    if target in figures.BUILTIN_FIGURES:
        spec = figures.BUILTIN_FIGURES[target]
        scenario = figures.build_design_dag(spec)
        structure = graphs.classify_bias(
            scenario.dag, scenario.exposures, scenario.outcome
        )
        boxed = ", ".join(sorted(v.label for v in scenario.dag.conditioned))
        print(f"scenario: {target}", file=out)
        print(f"conditioned: {{{boxed}}}", file=out)
        print(f"classification: {structure.kind.display}", file=out)
        _print_paths(scenario.dag, scenario.exposures, scenario.outcome, out)
        report = figures.verify_claims(spec)
        print("claims:", file=out)
        for claim in report.claims:
            status = "PASS" if claim.passed else "FAIL"
            print(f"  {status}  {claim.description}", file=out)
            if not claim.passed:
                print(f"        expected {claim.expected}, "
                      f"observed {claim.observed}", file=out)
        if not report.all_passed:
            print("claim check failed", file=sys.stderr)
            return 2
        return 0

    dag = graphs.parse_dag(Path(target).read_text())
    boxed = ", ".join(sorted(v.label for v in dag.conditioned))
    print(f"file: {target}", file=out)
    print(f"nodes: {len(dag.nodes)}, edges: {len(dag.edges)}, "
          f"conditioned: {{{boxed}}}", file=out)
    exposures = [v for v in (s.strip() for s in args.exposures.split(","))
                 if v and graphs.VariableId.parse(v) in dag.nodes]
    outcome_in = graphs.VariableId.parse(args.outcome) in dag.nodes
    if exposures and outcome_in:
        structure = graphs.classify_bias(dag, exposures, args.outcome)
        print(f"classification: {structure.kind.display}", file=out)
        _print_paths(
            dag, [graphs.VariableId.parse(v) for v in exposures],
            graphs.VariableId.parse(args.outcome), out,
        )
    else:
        print("classification: skipped (exposure/outcome nodes not present)",
              file=out)
    return 0


def _cmd_simulate(args) -> int:
    scenario = load_scenario_config(args.config)
    cohort = simulate_cohort(scenario, args.seed)
    write_cohort_csv(cohort, args.out)
    print(f"wrote {len(cohort)} subjects to {args.out}")
    return 0


def _cmd_analyze(args, out=None) -> int:
    out = out if out is not None else sys.stdout
    cohort = read_cohort_csv(args.cohort)
    horizon = args.horizon
    if horizon is None:
        recorded = [t for h in cohort for t in
                    (h.realized_award, h.death, h.outcome, h.cr_event)
                    if t is not None]
        if not recorded:
            raise DesignError(
                "cannot infer the horizon from an event-free cohort; "
                "pass --horizon"
            )
        horizon = max(recorded)
    dataset = apply_design(
        DesignId(args.design), cohort, horizon,
        tau=args.tau, window=args.window, seed=args.seed,
    )
    if args.estimator == "rate_ratio":
        est = rate_ratio(dataset)
    elif args.estimator == "discrete_hazard":
        est = fit_discrete_hazard(dataset)
    else:
        est = fit_discrete_hazard(
            dataset, adjust_frailty=True, frailty={h.id: h.u for h in cohort}
        )
    text = ESTIMATE_CSV_HEADER + "\n" + estimate_csv_row(
        args.design, args.estimator, est
    ) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    return 0


def _cmd_experiment(args) -> int:
    config = load_experiment_config(args.config, output_dir=args.out)
    if args.replicates is not None:
        config = type(config)(
            scenario=config.scenario,
            designs=config.designs,
            replicates=args.replicates,
            master_seed=config.master_seed,
            oracle_n=config.oracle_n,
            output_dir=config.output_dir,
        )
    report = run_experiment(config)
    formats = ("csv", "svg") if args.format == "both" else (args.format,)
    written = render_report(report, config.output_dir, formats)
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "dag":
            return _cmd_dag_check(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "experiment":
            return _cmd_experiment(args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


def main_entry() -> None:
    sys.exit(main())
