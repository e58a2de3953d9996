import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import highs, two_bus_highs
from scenmarket.casedef import Generator, Load, MarketCase, Scenario, SolveOptions
from scenmarket.clearing import (BASE, ClearingSolution, TraditionalSolution, build_cooptimization_lp,
                                 clear_cooptimization, clear_cooptimization_angle, clear_traditional,
                                 expected_cost, solve_recourse)
from scenmarket.errors import InfeasibleError, UnknownScenario
from scenmarket.netmodel import Line, Network
from scenmarket.verify import random_case


def first_stage_cost(case, g, r_up, r_down):
    return math.fsum(gen.c_energy * g[j] + gen.c_res_up * r_up[j] + gen.c_res_down * r_down[j]
                     for j, gen in enumerate(case.generators))


def test_fixture_matches_hand_built_oracle(two_bus, cleared):
    solution = cleared[0]
    obj, g, r_up, r_down = two_bus_highs()
    assert solution.objective == pytest.approx(obj, abs=1e-9)
    assert solution.g == pytest.approx(g, abs=1e-7)
    assert solution.r_up == pytest.approx(r_up, abs=1e-7)
    assert solution.r_down == pytest.approx(r_down, abs=1e-7)


def test_fixture_dispatch_values(cleared):
    solution = cleared[0]
    assert solution.objective == pytest.approx(367.212)
    assert solution.g == pytest.approx([8.0, 16.2, 0.8])
    assert solution.r_up == pytest.approx([2.4, 1.8, 4.0])
    assert solution.r_down == pytest.approx([0.8, 0.0, 0.4])
    assert solution.dshed == pytest.approx(np.zeros((5, 3)))


def test_recourse_respects_reserve(cleared):
    sol = cleared[0]
    assert np.all(sol.dg_up <= sol.r_up + 1e-9)
    assert np.all(sol.dg_down <= sol.r_down + 1e-9)


def test_objective_equals_primal_cost(two_bus, cleared):
    assert expected_cost(two_bus, cleared[0]) == pytest.approx(cleared[0].objective, abs=1e-9)


def test_objective_decomposes_into_first_stage_and_recourse(two_bus, cleared):
    sol = cleared[0]
    recourse = [solve_recourse(two_bus, s.id, sol.g, sol.r_up, sol.r_down) for s in two_bus.scenarios]
    assert all(r.feasible for r in recourse)
    total = first_stage_cost(two_bus, sol.g, sol.r_up, sol.r_down) + math.fsum(
        s.probability * r.cost for s, r in zip(two_bus.scenarios, recourse))
    assert total == pytest.approx(sol.objective, abs=1e-8)


def test_base_recourse_can_exploit_bid_spread(two_bus, cleared):
    # G3 backs down at its 20 $/MWh bid while G2 steps up at 15 within reserve
    sol = cleared[0]
    res = solve_recourse(two_bus, BASE, sol.g, sol.r_up, sol.r_down)
    assert res.feasible and res.cost == pytest.approx(-2.0)
    assert res.dg_up == pytest.approx([0, 0.4, 0]) and res.dg_down == pytest.approx([0, 0, 0.4])


def test_angle_form_agrees(two_bus, cleared):
    angle = clear_cooptimization_angle(two_bus)
    assert angle.objective == pytest.approx(cleared[0].objective, abs=1e-6)
    assert angle.model == "angle" and "nodal" in angle.duals


@pytest.mark.parametrize("seed", range(15))
def test_angle_form_agrees_on_random_cases(seed):
    case = random_case(seed)
    a, b = clear_cooptimization(case), clear_cooptimization_angle(case)
    assert a.objective == pytest.approx(b.objective, abs=1e-6 * max(1.0, abs(a.objective)))


@pytest.mark.parametrize("seed", range(15))
def test_random_cases_match_highs(seed):
    case = random_case(100 + seed)
    lp = build_cooptimization_lp(case)
    assert clear_cooptimization(case).objective == pytest.approx(highs(lp).fun, rel=1e-8, abs=1e-8)


def test_no_scenarios_reduces_to_dispatch(two_bus):
    plain = replace(two_bus, scenarios=(), loads=tuple(replace(l, fluctuation={}) for l in two_bus.loads))
    sol = clear_cooptimization(plain)
    assert sol.r_up == pytest.approx(0) and sol.r_down == pytest.approx(0)
    # G1 exports its 2 MW line limit; G2 covers the rest of bus 2
    assert sol.g == pytest.approx([8.0, 17.0, 0.0])
    assert sol.dg_up.shape == (0, 3)


def test_traditional_matches_highs(two_bus):
    trad = clear_traditional(two_bus, 8.0, 1.2)
    assert trad.objective == pytest.approx(338.9)
    assert trad.r_up.sum() == pytest.approx(8.0) and trad.r_down.sum() == pytest.approx(1.2)
    assert isinstance(trad, TraditionalSolution)
    assert TraditionalSolution.from_dict(trad.to_dict()).objective == trad.objective


def test_traditional_rejects_negative_requirement(two_bus):
    with pytest.raises(ValueError):
        clear_traditional(two_bus, -1, 0)


def test_traditional_unreachable_requirement(two_bus):
    with pytest.raises(InfeasibleError):
        clear_traditional(two_bus, 50.0, 0.0)


def test_infeasible_case_raises():
    net = Network(("1", "2"), (Line("a", "1", "2", 0.1, 1.0, 1.0),))
    gens = (Generator("G", "1", g_max=10, ramp_up=1, ramp_down=1, c_energy=1, c_res_up=1, c_res_down=1),)
    loads = (Load("L", "2", 5.0, 100.0),)
    with pytest.raises(InfeasibleError):
        clear_cooptimization(MarketCase(net, gens, loads, (), SolveOptions()))


def test_shedding_is_used_when_cheaper(two_bus):
    cheap = replace(two_bus, loads=tuple(replace(l, c_shed=1.0) for l in two_bus.loads))
    sol = clear_cooptimization(cheap)
    assert sol.dshed.sum() > 0
    assert np.all(sol.dshed <= np.array([two_bus.demand + two_bus.fluctuation(s) for s in two_bus.scenario_ids]) + 1e-9)


def test_infeasible_recourse_reports_penalty(two_bus):
    res = solve_recourse(two_bus, "S2", np.array([8.0, 17.0, 0.0]), np.zeros(3), np.zeros(3))
    # shedding keeps the recourse feasible; zero shedding room does not
    assert res.feasible
    tight = replace(two_bus, loads=tuple(replace(l, c_shed=0.0) for l in two_bus.loads))
    gens = np.array([16.0, 0.0, 0.0])
    bad = solve_recourse(tight, BASE, gens, np.zeros(3), np.zeros(3))
    assert not bad.feasible and bad.cost == two_bus.options.infeasible_recourse_penalty


def test_unknown_scenario(two_bus, cleared):
    with pytest.raises(UnknownScenario):
        cleared[0].scenario_index("S9")


def test_round_trip(cleared):
    sol = cleared[0]
    back = ClearingSolution.from_dict(sol.to_dict())
    assert back.objective == sol.objective
    assert np.array_equal(back.dg_up, sol.dg_up)
    assert set(back.duals) == set(sol.duals)


def test_dump_lp(tmp_path, two_bus):
    path = tmp_path / "model.lp"
    clear_cooptimization(two_bus, dump_lp=path)
    assert "Minimize" in path.read_text()


def test_ramp_anchor_limits_dispatch(two_bus):
    anchored = replace(two_bus, options=replace(two_bus.options, ramp_anchor={"G2": 14.0}))
    sol = clear_cooptimization(anchored)
    assert 14.0 - 4.0 - 1e-9 <= sol.g[1] <= 14.0 + 4.0 + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 2.0))
def test_uniform_cost_scaling_scales_objective(two_bus, factor):
    gens = tuple(replace(g, c_energy=g.c_energy * factor, c_res_up=g.c_res_up * factor,
                         c_res_down=g.c_res_down * factor, c_redisp_up=g.c_redisp_up * factor,
                         c_redisp_down=g.c_redisp_down * factor) for g in two_bus.generators)
    loads = tuple(replace(l, c_shed=l.c_shed * factor) for l in two_bus.loads)
    scaled = replace(two_bus, generators=gens, loads=loads)
    assert clear_cooptimization(scaled).objective == pytest.approx(367.212 * factor, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_more_reserve_cost_never_lowers_objective(seed):
    case = random_case(seed, max_buses=4, max_scenarios=3)
    base = clear_cooptimization(case).objective
    pricier = replace(case, generators=tuple(replace(g, c_res_up=g.c_res_up + 1.0) for g in case.generators))
    assert clear_cooptimization(pricier).objective >= base - 1e-7 * max(1.0, abs(base))
