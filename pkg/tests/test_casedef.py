import json
import os

import numpy as np
import pytest

from scenmarket import load_case, save_results
from scenmarket.casedef import (Generator, Load, Scenario, SolveOptions, atomic_write, case_from_dict,
                                case_to_dict, load_results, save_case, validate_case)
from scenmarket.errors import ParseError, ValidationError


def test_builtin_matches_shipped_file(two_bus):
    shipped = load_case(os.path.join(os.path.dirname(__file__), "..", "cases", "two_bus.json"))
    assert case_to_dict(shipped) == case_to_dict(two_bus)
    assert case_to_dict(load_case("builtin:two_bus")) == case_to_dict(two_bus)


def test_two_bus_contents(two_bus):
    assert two_bus.base_probability == pytest.approx(0.54)
    assert two_bus.demand == pytest.approx([6, 15, 4])
    assert two_bus.fluctuation("S2") == pytest.approx([2, 6, -1])
    assert two_bus.scenario("S1").outaged_line_ids == {"line_b"}


def test_round_trip_through_file(tmp_path, two_bus):
    path = tmp_path / "case.json"
    save_case(two_bus, path)
    assert case_to_dict(load_case(path)) == case_to_dict(two_bus)


def test_redispatch_bids_default_to_energy_bid():
    g = Generator("G", "1", g_max=5, ramp_up=1, ramp_down=1, c_energy=12, c_res_up=1, c_res_down=1)
    assert g.c_redisp_up == 12 and g.c_redisp_down == 12


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d["scenarios"][0].update(probability=0.9), "scenarios.probability"),
    (lambda d: d["generators"][0].update(bus="9"), "generators[G1].bus"),
    (lambda d: d["loads"][0].update(fluctuation={"S9": 1.0}), "loads[L1].fluctuation"),
    (lambda d: d["loads"][2].update(fluctuation={"S1": -5.0}), "loads[L3].fluctuation[S1]"),
    (lambda d: d["scenarios"][0].update(outaged_lines=["line_a", "line_b"]), "scenarios[S1].outaged_lines"),
    (lambda d: d["generators"][0].update(g_min=30), "generators[G1]"),
    (lambda d: d["options"].update(bogus=1), "options"),
    (lambda d: d["loads"][0].update(demand=-1), "loads[L1].demand"),
])
def test_validation_errors_name_the_field(two_bus, mutate, where):
    doc = case_to_dict(two_bus)
    mutate(doc)
    with pytest.raises(ValidationError) as err:
        case_from_dict(doc)
    assert err.value.path == where


def test_scenario_probability_range():
    with pytest.raises(ValidationError):
        Scenario("S", 0.0)
    with pytest.raises(ValidationError):
        Scenario("S", 1.0)


def test_parse_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_case(bad)
    bad.write_text("[]")
    with pytest.raises(ParseError):
        load_case(bad)
    bad.write_text('{"buses": ["1"]}')
    with pytest.raises(ParseError):
        load_case(bad)
    with pytest.raises(ParseError):
        load_case(tmp_path / "missing.json")
    with pytest.raises(ParseError):
        load_case("builtin:nope")


def test_validate_case_passes_fixture(two_bus):
    validate_case(two_bus)


def test_options_validation():
    with pytest.raises(ValidationError):
        SolveOptions(feas_tol=0)
    with pytest.raises(ValidationError):
        SolveOptions(infeasible_recourse_penalty=-1)


def test_load_delta_default_zero():
    assert Load("L", "1", 3.0, 100.0).delta("S1") == 0.0


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write(target, "first")
    with pytest.raises(TypeError):
        atomic_write(target, 12345)
    assert target.read_text() == "first"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]


def test_results_round_trip(tmp_path, two_bus, cleared):
    solution, prices, report = cleared
    for obj, name in ((solution, "sol.json"), (prices, "prices.json"), (report, "settle.json")):
        save_results(obj, tmp_path / name)
        back = load_results(tmp_path / name)
        assert type(back) is type(obj)
        assert json.dumps(back.to_dict(), sort_keys=True) == json.dumps(obj.to_dict(), sort_keys=True)
    save_results(report, tmp_path / "settle.csv")
    assert (tmp_path / "settle.csv").read_text().startswith(",Base,S1")


def test_unknown_result_kind(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"kind": "mystery"}')
    with pytest.raises(ParseError):
        load_results(path)


def test_csv_needs_tabular_report(tmp_path, cleared):
    with pytest.raises(TypeError):
        save_results(cleared[0], tmp_path / "sol.csv")


def test_replace_generator(two_bus):
    swapped = two_bus.replace_generator("G2", c_redisp_up=40.0)
    assert swapped.generators[1].c_redisp_up == 40.0
    assert two_bus.generators[1].c_redisp_up == 15.0
    assert np.all(swapped.demand == two_bus.demand)
