"""Executable market-property checks and a seeded random-case generator.

Each ``check_*`` returns a ``CheckReport``; none of them raise on failure.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .casedef import Generator, Load, MarketCase, Scenario, SolveOptions
from .clearing import build_cooptimization_lp, clear_cooptimization
from .errors import AssumptionViolated, BasisChangeDetected, InfeasibleError
from .lpcore import LinearProgram, Status, solve
from .netmodel import Line, Network, is_connected
from .pricing import compute_prices
from .settlement import settle

THEOREM_TOL = {1: 1e-7, 2: 1e-6, 3: 1e-6, 4: 1e-6}


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    max_residual: float
    tol: float
    details: tuple = ()
    seed: int = None

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "max_residual": self.max_residual,
                "tol": self.tol, "details": [dict(d) for d in self.details], "seed": self.seed}


def _report(name, rows, tol, seed=None):
    worst = max((r["residual"] for r in rows), default=0.0)
    passed = all(r["residual"] <= tol * r.get("scale", 1.0) for r in rows)
    return CheckReport(name, passed, float(worst), tol, tuple(rows), seed)


def check_theorem1(case, prices, solution=None, tol=THEOREM_TOL[1]):
    """Co-located resources share one energy price.

    Per bus, compares generator prices with the prices of loads that are never
    fully shed. With ``solution`` the generator side is rebuilt from its own
    stationarity (bid plus capacity-limit duals) instead of bus prices.
    """
    gen_price = np.array(prices.eta_g, dtype=float)
    if solution is not None:
        d = solution.duals
        c_g = np.array([g.c_energy for g in case.generators])
        gen_price = c_g + d["upsilon_up"] - d["upsilon_low"] + d["ramp_up"] - d["ramp_low"]
    flagged = {lid for _, lid in prices.shed_flags}
    rows = []
    for bus in case.network.buses:
        vals = [gen_price[j] for j, g in enumerate(case.generators) if g.bus == bus]
        vals += [prices.eta_d[l] for l, ld in enumerate(case.loads)
                 if ld.bus == bus and ld.id not in flagged]
        if len(vals) < 2:
            continue
        spread = max(vals) - min(vals)
        rows.append({"bus": bus, "residual": float(spread),
                     "scale": max(1.0, max(abs(v) for v in vals))})
    return _report("theorem1", rows, tol)


def check_theorem2(case, solution, settlement, prices, tol=THEOREM_TOL[2]):
    """Re-dispatch payment per MW equals the scenario bus price component."""
    feas = case.options.feas_tol
    rows = []
    for k, sid in enumerate(case.scenario_ids):
        for j, gen in enumerate(case.generators):
            omega = prices.omega_k[k, prices.bus_index(gen.bus)]
            up, down = solution.dg_up[k, j], solution.dg_down[k, j]
            if up > feas:
                ratio = settlement.pi_up_k[k, j] / up
                rows.append({"scenario": sid, "generator": gen.id, "direction": "up",
                             "ratio": float(ratio), "omega": float(omega),
                             "residual": float(abs(ratio - omega))})
            if down > feas:
                ratio = settlement.pi_down_k[k, j] / down
                rows.append({"scenario": sid, "generator": gen.id, "direction": "down",
                             "ratio": float(ratio), "omega": float(-omega),
                             "residual": float(abs(ratio + omega))})
    return _report("theorem2", rows, tol)


def profit_max_lp(gen, eta_g, eta_up, eta_down, ramp_anchor=None):
    """Single-generator profit maximization at fixed prices, as a minimization."""
    lo, hi = -math.inf, math.inf
    if ramp_anchor is not None:
        lo, hi = ramp_anchor - gen.ramp_down, ramp_anchor + gen.ramp_up
    return LinearProgram(
        c=-np.array([eta_g - gen.c_energy, eta_up - gen.c_res_up, eta_down - gen.c_res_down]),
        A_eq=np.zeros((0, 3)), b_eq=np.zeros(0),
        A_ub=np.array([[-1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]), b_ub=np.array([-gen.g_min, gen.g_max]),
        lb=np.array([lo, 0.0, 0.0]), ub=np.array([hi, gen.ramp_up, gen.ramp_down]),
        col_labels=("g", "r_up", "r_down"), ub_labels=("low", "high"))


def check_theorem3(case, solution, prices, tol=THEOREM_TOL[3]):
    """Cleared quantities maximize each generator's profit at the posted prices."""
    if not case.gmin_zero:
        raise AssumptionViolated("individual rationality check needs g_min = 0 for every generator")
    anchor = case.options.ramp_anchor or {}
    rows = []
    for j, gen in enumerate(case.generators):
        lp = profit_max_lp(gen, prices.eta_g[j], prices.eta_up[j], prices.eta_down[j], anchor.get(gen.id))
        sol = solve(lp)
        best = -sol.objective
        at_clear = -float(lp.c @ np.array([solution.g[j], solution.r_up[j], solution.r_down[j]]))
        scale = max(1.0, abs(best), abs(prices.eta_g[j]) * gen.g_max)
        rows.append({"generator": gen.id, "profit": at_clear, "best": best,
                     "residual": float(max(best - at_clear, -at_clear, 0.0)), "scale": scale})
    return _report("theorem3", rows, tol)


def check_theorem4(settlement, tol=THEOREM_TOL[4]):
    """Load payments cover credits plus congestion rent in every column."""
    _, cols, mat = settlement.money_flow()
    scale = max(1.0, float(np.abs(mat).max(initial=0.0)))
    resid = settlement.balance_residuals()
    rows = [{"column": c, "residual": float(abs(r)), "scale": scale} for c, r in zip(cols, resid)]
    return _report("theorem4", rows, tol)


def verify_case(case, theorems=(1, 2, 3, 4), tol=None, seed=None):
    """Clear, price, settle and run the requested checks."""
    unknown = [t for t in theorems if t not in THEOREM_TOL]
    if unknown:
        raise ValueError(f"unknown check numbers {unknown}")
    solution = clear_cooptimization(case)
    prices = compute_prices(case, solution)
    report = settle(case, solution, prices)
    out = []
    for t in theorems:
        t_tol = THEOREM_TOL[t] if tol is None else tol
        if t == 1:
            rep = check_theorem1(case, prices, solution, t_tol)
        elif t == 2:
            rep = check_theorem2(case, solution, report, prices, t_tol)
        elif t == 3:
            rep = check_theorem3(case, solution, prices, t_tol)
        else:
            rep = check_theorem4(report, t_tol)
        out.append(replace(rep, seed=seed))
    return out


# ------------------------------------------------------------ envelope check

def _fixed_cost(case, fixed=None):
    lp = build_cooptimization_lp(case, fixed)
    sol = solve(lp)
    if sol.status is not Status.OPTIMAL:
        raise InfeasibleError(f"perturbed problem returned {sol.status.value}")
    return sol.objective


def envelope_crosscheck(case, resource, quantity, h=None, scenario_id=None, solution=None):
    """Dual-based vs central-difference sensitivity of the optimal cost.

    ``quantity`` is ``g``, ``r_up`` or ``r_down`` for a generator (whose
    quantities are then held fixed, its own bids and limits removed), or
    ``d``/``pi`` for a load (``pi`` needs ``scenario_id``). Returns
    ``(dual_based, finite_difference)`` as derivatives of the optimal cost.
    Raises ``BasisChangeDetected`` if the one-sided quotients disagree.
    """
    solution = solution or clear_cooptimization(case)
    prices = compute_prices(case, solution)
    if quantity in ("g", "r_up", "r_down"):
        j = case.generator_ids.index(resource)
        base = [solution.g[j], solution.r_up[j], solution.r_down[j]]
        pos = ("g", "r_up", "r_down").index(quantity)
        scale = max(1.0, abs(base[pos]))
        h = h or 1e-4 * scale
        dual = -float((prices.eta_g, prices.eta_up, prices.eta_down)[pos][j])

        def cost(step):
            vals = list(base)
            vals[pos] += step
            return _fixed_cost(case, {resource: tuple(vals)})
    elif quantity in ("d", "pi"):
        l = case.load_ids.index(resource)
        load = case.loads[l]
        h = h or 1e-4 * max(1.0, load.demand)
        if quantity == "d":
            dual = float(prices.eta_d[l])
        else:
            k = case.scenario_ids.index(scenario_id)
            dual = float(prices.omega_k[k, prices.bus_index(load.bus)]
                         - solution.duals["tau_up"][k, l])

        def cost(step):
            if quantity == "d":
                new = replace(load, demand=load.demand + step)
            else:
                fl = dict(load.fluctuation)
                fl[scenario_id] = fl.get(scenario_id, 0.0) + step
                new = replace(load, fluctuation=fl)
            loads = tuple(new if x.id == resource else x for x in case.loads)
            return _fixed_cost(replace(case, loads=loads))
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    try:
        c0, c_plus, c_minus = cost(0.0), cost(h), cost(-h)
    except Exception as exc:
        raise BasisChangeDetected(f"perturbation of {resource}.{quantity} left the feasible set") from exc
    forward, backward = (c_plus - c0) / h, (c0 - c_minus) / h
    if abs(forward - backward) > max(1e-4, 1e-3 * max(abs(forward), abs(backward))):
        raise BasisChangeDetected(
            f"{resource}.{quantity}: one-sided slopes {forward:.6g} and {backward:.6g} differ",
            slopes=(forward, backward))
    return dual, (c_plus - c_minus) / (2 * h)


# ----------------------------------------------------------- random cases

def random_case(seed, max_buses=8, max_scenarios=6, max_tries=50):
    """Seeded random case: connected network, g_min = 0, finite shedding price,
    scenario probability mass below one, and a feasible clearing model."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        case = _draw_case(rng, seed, max_buses, max_scenarios)
        try:
            clear_cooptimization(case)
        except InfeasibleError:
            continue
        return case
    raise RuntimeError(f"no feasible case drawn for seed {seed}")


def _draw_case(rng, seed, max_buses, max_scenarios):
    n_b = int(rng.integers(2, max_buses + 1))
    buses = tuple(str(i + 1) for i in range(n_b))
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n_b)]  # random spanning tree
    for _ in range(int(rng.integers(0, n_b + 1))):
        a, b = rng.choice(n_b, size=2, replace=False)
        edges.append((int(a), int(b)))
    lines = []
    for i, (a, b) in enumerate(edges):
        cap = float(rng.uniform(1.0, 8.0))
        lines.append(Line(f"L{i + 1}", buses[a], buses[b], float(rng.uniform(0.05, 0.5)),
                          cap, cap * float(rng.uniform(1.0, 1.5))))
    network = Network(buses, tuple(lines))
    gens = []
    for j in range(int(rng.integers(2, 7))):
        g_max = float(rng.uniform(5.0, 30.0))
        c_g = float(rng.uniform(5.0, 50.0))
        gens.append(Generator(
            f"G{j + 1}", buses[int(rng.integers(0, n_b))], g_max=g_max,
            ramp_up=float(rng.uniform(0.5, 0.5 * g_max)), ramp_down=float(rng.uniform(0.5, 0.5 * g_max)),
            c_energy=c_g, c_res_up=float(rng.uniform(0.5, 5.0)), c_res_down=float(rng.uniform(0.5, 5.0)),
            c_redisp_up=c_g * float(rng.uniform(1.0, 1.5)), c_redisp_down=c_g * float(rng.uniform(0.5, 1.0))))
    capacity = sum(g.g_max for g in gens)
    n_l = int(rng.integers(1, 6))
    shares = rng.dirichlet(np.ones(n_l))
    total = capacity * float(rng.uniform(0.2, 0.6))
    demand = shares * total
    scenarios = []
    budget = float(rng.uniform(0.05, 0.6))
    n_k = int(rng.integers(0, max_scenarios + 1))
    probs = rng.dirichlet(np.ones(n_k)) * budget if n_k else []
    for k in range(n_k):
        outage = frozenset()
        if rng.random() < 0.5:
            cand = [ln.id for ln in lines if is_connected(network, {ln.id})]
            if cand:
                outage = frozenset({cand[int(rng.integers(0, len(cand)))]})
        scenarios.append(Scenario(f"S{k + 1}", float(max(probs[k], 1e-3)), outage))
    loads = []
    for l in range(n_l):
        fl = {}
        for s in scenarios:
            if rng.random() < 0.7:
                fl[s.id] = float(demand[l] * rng.uniform(-0.3, 0.3))
        loads.append(Load(f"D{l + 1}", buses[int(rng.integers(0, n_b))], float(demand[l]),
                          float(rng.uniform(100.0, 1000.0)), fl))
    return MarketCase(network, tuple(gens), tuple(loads), tuple(scenarios), SolveOptions(),
                      name=f"random-{seed}")
