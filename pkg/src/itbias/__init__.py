"""Immortal-time bias laboratory.

Time-varying causal DAG tooling (parsing, d-separation, path
classification), canonical study-design scenarios with mechanical
claim checks, a gated-exposure cohort simulator with exact and Monte
Carlo truth oracles, study-design compilers, estimators, and a
replicate experiment harness.
"""

from .cohort import (
    CompetingConfig,
    ConfigError,
    Estimand,
    OracleError,
    PersonHistory,
    ScenarioConfig,
    TrueEffect,
    enumerate_exact,
    exact_true_effect,
    oracle_true_effect,
    read_cohort_csv,
    simulate_cohort,
    write_cohort_csv,
)
from .designs import (
    AnalysisDataset,
    AnalysisRow,
    DesignError,
    DesignId,
    apply_design,
    immortal_time_total,
)
from .estimators import (
    CifCurves,
    ConvergenceError,
    Estimate,
    EstimationError,
    SeparationError,
    SingularMatrixError,
    cumulative_incidence,
    exact_design_rate_ratio,
    fit_discrete_hazard,
    newton_raphson_logistic,
    rate_ratio,
)
from .experiment import (
    DesignRun,
    ExperimentConfig,
    ExperimentReport,
    load_experiment_config,
    load_scenario_config,
    render_report,
    run_experiment,
)
from .figures import (
    BUILTIN_FIGURES,
    CausalScenario,
    ClaimReport,
    DesignSpec,
    ImmortalCause,
    Matching,
    UnsupportedDesignError,
    build_design_dag,
    builtin_scenario,
    expected_structure,
    verify_claims,
)
from .graphs import (
    AnnotatedPath,
    BiasKind,
    BiasStructure,
    CycleError,
    Dag,
    DagError,
    DagSyntaxError,
    PathKind,
    PathLimitError,
    PathStatus,
    UnknownNodeError,
    VariableId,
    annotate_path,
    classify_bias,
    is_d_separated,
    open_paths,
    parse_dag,
    render_dag,
    to_dot,
)

__version__ = "0.1.0"
