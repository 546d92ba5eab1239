import pytest

from itbias.cli import main
from itbias.figures import BUILTIN_FIGURES

SCENARIO_TEXT = """\
[scenario]
n_subjects = 800
horizon = 4
frailty_prevalence = 0.4
award_probability = 0.5
award_delay = 0.5
base_death_hazard = 0.1
log_effect = -0.3
log_frailty_effect = 1.0986122886681098
eligibility_age = 2
"""

EXPERIMENT_TEXT = SCENARIO_TEXT + """
[experiment]
replicates = 2
master_seed = 31
oracle_n = 20000

[design]
id = EverExposedFull
estimator = rate_ratio

[design]
id = PersonTimeSplit
estimator = rate_ratio
"""


def test_dag_check_builtin_confounding(capsys):
    assert main(["dag", "check", "fig1b"]) == 0
    out = capsys.readouterr().out
    assert "classification: Confounding" in out
    assert "PASS" in out and "FAIL" not in out


def test_dag_check_null_eligibility_is_clean(capsys):
    assert main(["dag", "check", "figS1"]) == 0
    assert "classification: None" in capsys.readouterr().out


def test_dag_check_every_builtin_exits_zero():
    for fid in BUILTIN_FIGURES:
        assert main(["dag", "check", fid]) == 0


def test_dag_check_missing_file_reports_on_stderr(capsys):
    assert main(["dag", "check", "missing.dag"]) == 2
    assert "error" in capsys.readouterr().err


def test_dag_check_unparsable_file(tmp_path, capsys):
    bad = tmp_path / "bad.dag"
    bad.write_text("A => B\n")
    assert main(["dag", "check", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_dag_check_user_file(tmp_path, capsys):
    path = tmp_path / "toy.dag"
    path.write_text("[D0+]\nE0 -> E1\nE1 -> D1+\nD0+ -> E1\nD0+ -> D1+\nU0 -> D0+\n")
    assert main(["dag", "check", str(path)]) == 0
    out = capsys.readouterr().out
    assert "classification:" in out
    assert "paths" in out


def test_usage_errors_exit_one(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["analyze", "--design", "NotADesign", "--cohort", "x"]) == 1


def test_simulate_then_analyze_pipeline(tmp_path, capsys):
    config = tmp_path / "scenario.cfg"
    config.write_text(SCENARIO_TEXT)
    cohort_path = tmp_path / "cohort.csv"
    assert main([
        "simulate", "--config", str(config), "--seed", "4",
        "--out", str(cohort_path),
    ]) == 0
    assert cohort_path.exists()
    header = cohort_path.read_text().splitlines()[0]
    assert header == "id,u,scheduled_award,realized_award,death,outcome,cr_event"

    capsys.readouterr()
    assert main([
        "analyze", "--design", "EverExposedFull", "--estimator", "rate_ratio",
        "--cohort", str(cohort_path), "--horizon", "4",
    ]) == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert lines[0].startswith("design,estimator,log_value")
    assert lines[1].startswith("EverExposedFull,rate_ratio,")

    est_path = tmp_path / "estimate.csv"
    assert main([
        "analyze", "--design", "SurvivorEligibility", "--cohort",
        str(cohort_path), "--tau", "2", "--horizon", "4",
        "--out", str(est_path),
    ]) == 0
    assert est_path.read_text().startswith("design,estimator,")


def test_analyze_infers_horizon_when_possible(tmp_path, capsys):
    config = tmp_path / "scenario.cfg"
    config.write_text(SCENARIO_TEXT)
    cohort_path = tmp_path / "cohort.csv"
    main(["simulate", "--config", str(config), "--seed", "4",
          "--out", str(cohort_path)])
    capsys.readouterr()
    assert main([
        "analyze", "--design", "PersonTimeSplit", "--cohort", str(cohort_path),
    ]) == 0


def test_analyze_missing_params_exit_two(tmp_path, capsys):
    config = tmp_path / "scenario.cfg"
    config.write_text(SCENARIO_TEXT)
    cohort_path = tmp_path / "cohort.csv"
    main(["simulate", "--config", str(config), "--seed", "4",
          "--out", str(cohort_path)])
    assert main([
        "analyze", "--design", "SurvivorEligibility",
        "--cohort", str(cohort_path), "--horizon", "4",
    ]) == 2
    assert "tau" in capsys.readouterr().err


def test_experiment_subcommand_writes_reports(tmp_path, capsys):
    config = tmp_path / "experiment.cfg"
    config.write_text(EXPERIMENT_TEXT)
    out_dir = tmp_path / "out"
    assert main([
        "experiment", "--config", str(config), "--out", str(out_dir),
    ]) == 0
    assert (out_dir / "report.csv").exists()
    assert (out_dir / "report.svg").exists()

    csv_only = tmp_path / "csv_only"
    assert main([
        "experiment", "--config", str(config), "--out", str(csv_only),
        "--replicates", "1", "--format", "csv",
    ]) == 0
    assert (csv_only / "report.csv").exists()
    assert not (csv_only / "report.svg").exists()


def test_experiment_bad_config_exits_two(tmp_path, capsys):
    config = tmp_path / "experiment.cfg"
    config.write_text(EXPERIMENT_TEXT.replace("[experiment]", "[experiment]\nbogus = 1"))
    assert main(["experiment", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
