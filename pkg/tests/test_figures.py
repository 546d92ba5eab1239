from itertools import product

import pytest

from itbias.figures import (
    BUILTIN_FIGURES,
    DesignSpec,
    ImmortalCause,
    Matching,
    UnsupportedDesignError,
    build_design_dag,
    builtin_scenario,
    expected_structure,
    verify_claims,
)
from itbias.graphs import (
    BiasKind,
    PathKind,
    VariableId,
    annotate_path,
    classify_bias,
    is_d_separated,
    open_paths,
)


def edge(dag, a, b):
    return (VariableId.parse(a), VariableId.parse(b)) in dag.edges


def all_specs():
    for cause, excl, cr, null, match in product(
        ImmortalCause, (False, True), (False, True), (False, True), Matching
    ):
        try:
            yield DesignSpec(cause, excl, cr, null, match)
        except UnsupportedDesignError:
            continue


def valid_specs():
    for spec in all_specs():
        try:
            build_design_dag(spec)
        except UnsupportedDesignError:
            continue
        yield spec


# ---------------------------------------------------------------------------
# scenario construction

def test_exposure_defined_scenario():
    scenario = build_design_dag(DesignSpec(ImmortalCause.EXPOSURE_DEFINITION))
    assert scenario.figure_id == "fig1b"
    assert scenario.dag.conditioned == frozenset()
    assert edge(scenario.dag, "D0+", "E1")
    assert edge(scenario.dag, "D0+", "D1+")
    assert edge(scenario.dag, "E0", "E1")


def test_eligibility_exclusion_scenario():
    scenario = build_design_dag(
        DesignSpec(ImmortalCause.ELIGIBILITY_DEFINITION, exclude_immortal=True)
    )
    assert scenario.figure_id == "fig2d"
    assert {v.label for v in scenario.dag.conditioned} == {"D0+", "S"}
    assert edge(scenario.dag, "D0+", "S")


def test_competing_eligibility_scenario():
    scenario = build_design_dag(
        DesignSpec(ImmortalCause.ELIGIBILITY_DEFINITION, competing_risk=True)
    )
    assert scenario.figure_id == "fig3d"
    assert {v.label for v in scenario.dag.conditioned} == {"D0+", "CR0+"}


def test_null_effect_removes_exposure_event_arrows_only():
    scenario = build_design_dag(
        DesignSpec(ImmortalCause.EXPOSURE_DEFINITION, null_effect=True)
    )
    assert scenario.figure_id == "fig1b"
    assert not edge(scenario.dag, "E0", "D0+")
    assert not edge(scenario.dag, "E1", "D1+")
    assert edge(scenario.dag, "D0+", "E1")  # the survival gate survives


def test_null_eligibility_maps_to_supplemental_ids():
    assert build_design_dag(
        DesignSpec(ImmortalCause.ELIGIBILITY_DEFINITION, null_effect=True)
    ).figure_id == "figS1"
    assert build_design_dag(
        DesignSpec(
            ImmortalCause.ELIGIBILITY_DEFINITION,
            competing_risk=True,
            null_effect=True,
        )
    ).figure_id == "figS2"


def test_matching_scenario_adds_boxed_exclusion_node():
    scenario = build_design_dag(BUILTIN_FIGURES["figS3"])
    assert {v.label for v in scenario.dag.conditioned} == {"D0+", "S"}
    assert edge(scenario.dag, "E0", "S")
    assert edge(scenario.dag, "E1", "S")


def test_unsupported_combinations_raise():
    with pytest.raises(UnsupportedDesignError):
        build_design_dag(
            DesignSpec(
                ImmortalCause.EXPOSURE_DEFINITION,
                exclude_immortal=True,
                competing_risk=True,
            )
        )
    with pytest.raises(UnsupportedDesignError):
        DesignSpec(
            ImmortalCause.ELIGIBILITY_DEFINITION,
            matching=Matching.PRESCRIPTION_TIME_DISTRIBUTION,
        )
    with pytest.raises(UnsupportedDesignError):
        build_design_dag(
            DesignSpec(
                ImmortalCause.EXPOSURE_DEFINITION,
                exclude_immortal=True,
                matching=Matching.PRESCRIPTION_TIME_DISTRIBUTION,
            )
        )


def test_builtin_ids_round_trip():
    for fid in BUILTIN_FIGURES:
        assert builtin_scenario(fid).figure_id == fid
    with pytest.raises(UnsupportedDesignError):
        builtin_scenario("fig9z")


# ---------------------------------------------------------------------------
# expected structure

def test_expected_structure_examples():
    assert expected_structure(
        DesignSpec(ImmortalCause.EXPOSURE_DEFINITION, exclude_immortal=True)
    ) is BiasKind.COMPOSITE
    assert expected_structure(
        DesignSpec(ImmortalCause.ELIGIBILITY_DEFINITION, competing_risk=True)
    ) is BiasKind.SELECTION
    assert expected_structure(
        DesignSpec(ImmortalCause.ELIGIBILITY_DEFINITION, null_effect=True)
    ) is BiasKind.NONE


def test_classification_matches_expected_structure_for_every_valid_spec():
    checked = 0
    for spec in valid_specs():
        scenario = build_design_dag(spec)
        structure = classify_bias(
            scenario.dag, scenario.exposures, scenario.outcome
        )
        assert structure.kind is expected_structure(spec), spec
        checked += 1
    assert checked >= 12


# ---------------------------------------------------------------------------
# figure-level invariants

def test_exposure_scenario_stays_connected_under_null():
    for null in (False, True):
        scenario = build_design_dag(
            DesignSpec(ImmortalCause.EXPOSURE_DEFINITION, null_effect=null)
        )
        assert not is_d_separated(scenario.dag, ["E1"], ["D1+"], [])


def test_null_eligibility_separates_exposures_from_outcome():
    scenario = builtin_scenario("figS1")
    assert is_d_separated(scenario.dag, ["E0", "E1"], ["D1+"], ["D0+"])


def test_exclusion_scenario_connections():
    scenario = builtin_scenario("fig2b")
    assert not is_d_separated(scenario.dag, ["E0"], ["D0+"], ["S"])
    assert not is_d_separated(scenario.dag, ["E1"], ["D1+"], ["S"])


def test_competing_gate_path_is_open():
    scenario = builtin_scenario("fig3b")
    ann = annotate_path(scenario.dag, ["E1", "CR0+", "U0", "U1", "D1+"], [])
    assert ann.is_open


def test_competing_eligibility_opens_exactly_two_paths():
    scenario = builtin_scenario("fig3d")
    paths = [
        p for p in open_paths(scenario.dag, "E0", "U0", scenario.dag.conditioned)
        if p.is_open
    ]
    assert {p.labels() for p in paths} == {
        ("E0", "D0+", "U0"),
        ("E0", "CR0+", "U0"),
    }
    assert all(p.classification is PathKind.COLLIDER_OPENED for p in paths)


# ---------------------------------------------------------------------------
# claim reports

def test_all_builtin_claim_reports_pass():
    for fid, spec in BUILTIN_FIGURES.items():
        report = verify_claims(spec)
        assert report.figure_id == fid
        failures = [c for c in report.claims if not c.passed]
        assert report.all_passed, (fid, failures)


def test_eligibility_claims_include_closed_direct_path():
    report = verify_claims(BUILTIN_FIGURES["fig1d"])
    blocked = [
        c for c in report.claims
        if "E1 <- D0+ -> D1+" in c.description and c.expected == "blocked"
    ]
    assert blocked and blocked[0].passed


def test_exclusion_eligibility_claims_include_inventory_match():
    report = verify_claims(BUILTIN_FIGURES["fig2d"])
    inventory = [c for c in report.claims if "opens no" in c.description]
    assert inventory and inventory[0].passed


def test_competing_null_claims_include_separation():
    report = verify_claims(BUILTIN_FIGURES["figS2"])
    separated = [c for c in report.claims if c.expected == "separated"]
    assert separated and all(c.passed for c in separated)


def test_claims_pass_for_noncanonical_null_variants():
    spec = DesignSpec(
        ImmortalCause.EXPOSURE_DEFINITION, exclude_immortal=True, null_effect=True
    )
    report = verify_claims(spec)
    assert report.figure_id == "fig2b"
    assert report.all_passed
