from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenmarket.clearing import clear_cooptimization, clear_cooptimization_angle
from scenmarket.errors import MissingDuals, UnknownBus, UnknownScenario
from scenmarket.pricing import PriceReport, compute_prices, price_decomposition, price_stability
from scenmarket.verify import random_case


def test_fixture_is_dual_nondegenerate(two_bus):
    # prices do not move under tiny demand nudges, so pinning them is safe
    assert price_stability(two_bus) < 1e-9


def test_fixture_resource_prices(cleared):
    prices = cleared[1]
    assert prices.eta_g == pytest.approx([8.0, 20.0, 20.0])
    assert prices.eta_up == pytest.approx([2.0, 7.0, 6.0])
    assert prices.eta_down == pytest.approx([2.0, 2.0, 2.5])
    assert prices.eta_d == pytest.approx([8.0, 20.0, 20.0])


def test_fixture_bus_components(cleared):
    prices = cleared[1]
    # bus-2 components agree with HiGHS balance-row duals (bus 2 as reference)
    assert prices.omega_base == pytest.approx([4.32, 7.3])
    assert prices.omega_k[:, 1] == pytest.approx([0.9, 6.4, 0.3, 3.6, 1.5])
    assert prices.omega_k[:, 0] == pytest.approx([-1.52, 0.16, 0.16, 3.38, 1.5])


def test_generator_price_is_sum_of_components(cleared, two_bus):
    prices = cleared[1]
    for j, gen in enumerate(two_bus.generators):
        b = prices.bus_index(gen.bus)
        assert prices.eta_g[j] == pytest.approx(prices.omega_base[b] + prices.omega_k[:, b].sum())


def test_decomposition_adds_up(cleared):
    prices = cleared[1]
    for bus in prices.bus_ids:
        energy, congestion = price_decomposition(prices, bus)
        assert energy + congestion == pytest.approx(prices.omega_at(bus))
        for sid in prices.scenario_ids:
            energy, congestion = price_decomposition(prices, bus, sid)
            assert energy + congestion == pytest.approx(prices.omega_at(bus, sid))


def test_reference_bus_has_no_congestion_part(cleared):
    prices = cleared[1]
    assert price_decomposition(prices, "1") == (pytest.approx(4.32), pytest.approx(0.0))


def test_unknown_bus_and_scenario(cleared):
    prices = cleared[1]
    with pytest.raises(UnknownBus):
        prices.omega_at("7")
    with pytest.raises(UnknownScenario):
        price_decomposition(prices, "1", "S9")


def test_missing_duals(two_bus, cleared):
    sol = cleared[0]
    stripped = replace(sol, duals={k: v for k, v in sol.duals.items() if k != "alpha_up"})
    with pytest.raises(MissingDuals):
        compute_prices(two_bus, stripped)


def test_angle_form_gives_same_prices(two_bus, cleared):
    angle = compute_prices(two_bus, clear_cooptimization_angle(two_bus))
    prices = cleared[1]
    for name in ("eta_g", "eta_d", "eta_up", "eta_down", "omega_base", "omega_k"):
        assert getattr(angle, name) == pytest.approx(getattr(prices, name), abs=1e-8)


def test_reference_choice_does_not_move_fixture_prices(two_bus, cleared):
    moved = two_bus.with_reference("2")
    prices = compute_prices(moved, clear_cooptimization(moved))
    assert prices.eta_g == pytest.approx(cleared[1].eta_g)
    assert prices.omega_base == pytest.approx(cleared[1].omega_base)
    assert prices.energy_base == pytest.approx(7.3)


def test_csv_and_round_trip(cleared):
    prices = cleared[1]
    text = prices.to_csv()
    assert text.splitlines()[0] == "bus,scope,energy,congestion,omega"
    assert len(text.splitlines()) == 1 + 2 * 6
    back = PriceReport.from_dict(prices.to_dict())
    assert np.array_equal(back.omega_k, prices.omega_k)
    assert prices.generator("G2") == {"eta_g": pytest.approx(20), "eta_up": pytest.approx(7),
                                      "eta_down": pytest.approx(2)}


def test_fully_shed_load_is_flagged(two_bus):
    # shedding is nearly free, so some load is fully shed in some scenario
    cheap = replace(two_bus, loads=tuple(replace(l, c_shed=0.5) for l in two_bus.loads))
    sol = clear_cooptimization(cheap)
    prices = compute_prices(cheap, sol)
    caps = np.array([cheap.demand + cheap.fluctuation(s) for s in cheap.scenario_ids])
    fully = {(cheap.scenario_ids[k], cheap.load_ids[l]) for k, l in zip(*np.nonzero(sol.dshed >= caps - 1e-9))}
    assert set(prices.shed_flags) <= fully
    if prices.shed_flags:
        assert prices.notes


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_reserve_prices_nonnegative(seed):
    case = random_case(seed, max_buses=5, max_scenarios=4)
    prices = compute_prices(case, clear_cooptimization(case))
    assert np.all(prices.eta_up >= -1e-9) and np.all(prices.eta_down >= -1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_reserve_price_covers_reserve_bid_when_procured(seed):
    case = random_case(seed, max_buses=5, max_scenarios=4)
    sol = clear_cooptimization(case)
    prices = compute_prices(case, sol)
    for j, gen in enumerate(case.generators):
        if sol.r_up[j] > 1e-7:
            assert prices.eta_up[j] >= gen.c_res_up - 1e-7
        if sol.r_down[j] > 1e-7:
            assert prices.eta_down[j] >= gen.c_res_down - 1e-7
