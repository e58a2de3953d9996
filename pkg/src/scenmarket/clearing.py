"""Builders and solvers for the clearing models.

* ``clear_cooptimization``: scenario-based energy/reserve co-optimization on
  shift factors.
* ``clear_cooptimization_angle``: the same model written on bus angles.
* ``clear_traditional``: energy plus fixed system reserve requirements.
* ``solve_recourse``: re-dispatch and shedding for one realized scenario with
  first-stage quantities fixed.

Row labels follow ``<family>:<scope>[:<element>]``, e.g. ``balance:base``,
``flow+:S2:line_a``, ``dgu_cap:S4:G2``. Column labels are ``g:G1``,
``ru:G1``, ``rd:G1``, ``dgu:S1:G1``, ``dgd:S1:G1``, ``dd:S1:L1`` and
``theta:<scope>:<bus>`` in the angle form.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, NumericalFailure, UnknownScenario
from .lpcore import LpBuilder, Status, solve, to_lp_text
from .netmodel import build_angle_system, compute_ptdf

BASE = "base"

# per-scenario dual arrays; first axis follows case.scenarios
_SCENARIO_DUALS = ("lambda_k", "mu_plus_k", "mu_minus_k", "alpha_up", "alpha_low",
                   "beta_up", "beta_low", "tau_up", "tau_low", "nodal_k")


@dataclass(frozen=True)
class ClearingSolution:
    """Optimal first-stage and recourse quantities with all duals.

    Arrays are ordered as in the case: generators, loads, lines, buses and
    scenarios (first axis of the per-scenario arrays).
    """
    kind = "clearing_solution"

    model: str
    generator_ids: tuple
    load_ids: tuple
    line_ids: tuple
    bus_ids: tuple
    scenario_ids: tuple
    g: np.ndarray
    r_up: np.ndarray
    r_down: np.ndarray
    dg_up: np.ndarray
    dg_down: np.ndarray
    dshed: np.ndarray
    objective: float
    duals: dict
    kkt_residuals: dict = field(default_factory=dict)
    iterations: int = 0

    def scenario_index(self, scenario_id):
        try:
            return self.scenario_ids.index(scenario_id)
        except ValueError:
            raise UnknownScenario(scenario_id) from None

    def to_dict(self):
        return {
            "kind": self.kind, "model": self.model,
            "generator_ids": list(self.generator_ids), "load_ids": list(self.load_ids),
            "line_ids": list(self.line_ids), "bus_ids": list(self.bus_ids),
            "scenario_ids": list(self.scenario_ids),
            "g": self.g.tolist(), "r_up": self.r_up.tolist(), "r_down": self.r_down.tolist(),
            "dg_up": self.dg_up.tolist(), "dg_down": self.dg_down.tolist(),
            "dshed": self.dshed.tolist(), "objective": self.objective,
            "duals": {k: np.asarray(v).tolist() for k, v in self.duals.items()},
            "kkt_residuals": dict(self.kkt_residuals), "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, doc):
        n_g, n_l = len(doc["generator_ids"]), len(doc["load_ids"])
        n_k = len(doc["scenario_ids"])

        def arr(key, cols):
            return np.asarray(doc[key], dtype=float).reshape(n_k, cols)

        return cls(
            model=doc["model"], generator_ids=tuple(doc["generator_ids"]),
            load_ids=tuple(doc["load_ids"]), line_ids=tuple(doc["line_ids"]),
            bus_ids=tuple(doc["bus_ids"]), scenario_ids=tuple(doc["scenario_ids"]),
            g=np.asarray(doc["g"], dtype=float), r_up=np.asarray(doc["r_up"], dtype=float),
            r_down=np.asarray(doc["r_down"], dtype=float),
            dg_up=arr("dg_up", n_g), dg_down=arr("dg_down", n_g), dshed=arr("dshed", n_l),
            objective=float(doc["objective"]),
            duals={k: _dual_array(k, v, n_k) for k, v in doc["duals"].items()},
            kkt_residuals=dict(doc.get("kkt_residuals", {})),
            iterations=int(doc.get("iterations", 0)))


def _dual_array(key, value, n_k):
    out = np.asarray(value, dtype=float)
    if key in _SCENARIO_DUALS and out.size == 0:
        return out.reshape(n_k, 0)
    return out


@dataclass(frozen=True)
class TraditionalSolution:
    """Energy dispatch with reserve sized to fixed system requirements."""
    kind = "traditional_solution"

    generator_ids: tuple
    line_ids: tuple
    bus_ids: tuple
    req_up: float
    req_down: float
    g: np.ndarray
    r_up: np.ndarray
    r_down: np.ndarray
    objective: float
    duals: dict
    kkt_residuals: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": self.kind, "generator_ids": list(self.generator_ids),
            "line_ids": list(self.line_ids), "bus_ids": list(self.bus_ids),
            "req_up": self.req_up, "req_down": self.req_down,
            "g": self.g.tolist(), "r_up": self.r_up.tolist(), "r_down": self.r_down.tolist(),
            "objective": self.objective,
            "duals": {k: np.asarray(v).tolist() for k, v in self.duals.items()},
            "kkt_residuals": dict(self.kkt_residuals),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            generator_ids=tuple(doc["generator_ids"]), line_ids=tuple(doc["line_ids"]),
            bus_ids=tuple(doc["bus_ids"]), req_up=float(doc["req_up"]),
            req_down=float(doc["req_down"]), g=np.asarray(doc["g"], dtype=float),
            r_up=np.asarray(doc["r_up"], dtype=float), r_down=np.asarray(doc["r_down"], dtype=float),
            objective=float(doc["objective"]),
            duals={k: np.asarray(v, dtype=float) for k, v in doc["duals"].items()},
            kkt_residuals=dict(doc.get("kkt_residuals", {})))


@dataclass(frozen=True)
class RecourseResult:
    scenario_id: str
    feasible: bool
    cost: float
    dg_up: np.ndarray = None
    dg_down: np.ndarray = None
    dshed: np.ndarray = None


# ------------------------------------------------------------------ helpers

def _gen_cols(case, prefix, scope=None):
    mid = f"{scope}:" if scope else ""
    return [f"{prefix}:{mid}{g.id}" for g in case.generators]


def _add_first_stage(b, case, fixed=None):
    """First-stage columns and generator limit rows.

    ``fixed`` maps a generator id to ``(g, r_up, r_down)``: that resource's
    quantities become parameters, with its own cost and limits dropped.
    """
    fixed = fixed or {}
    anchor = case.options.ramp_anchor or {}
    for gen in case.generators:
        lo, hi = -math.inf, math.inf
        if gen.id in anchor:
            lo, hi = anchor[gen.id] - gen.ramp_down, anchor[gen.id] + gen.ramp_up
        if gen.id in fixed:
            b.add_var(f"g:{gen.id}", fixed[gen.id][0], fixed[gen.id][0], 0.0)
        else:
            b.add_var(f"g:{gen.id}", lo, hi, gen.c_energy)
    for gen in case.generators:
        if gen.id in fixed:
            b.add_var(f"ru:{gen.id}", fixed[gen.id][1], fixed[gen.id][1], 0.0)
        else:
            b.add_var(f"ru:{gen.id}", 0.0, gen.ramp_up, gen.c_res_up)
    for gen in case.generators:
        if gen.id in fixed:
            b.add_var(f"rd:{gen.id}", fixed[gen.id][2], fixed[gen.id][2], 0.0)
        else:
            b.add_var(f"rd:{gen.id}", 0.0, gen.ramp_down, gen.c_res_down)
    for gen in case.generators:
        if gen.id in fixed:
            continue
        b.add_le(f"gen_low:{gen.id}", {f"g:{gen.id}": -1.0, f"rd:{gen.id}": 1.0}, -gen.g_min)
        b.add_le(f"gen_high:{gen.id}", {f"g:{gen.id}": 1.0, f"ru:{gen.id}": 1.0}, gen.g_max)


def _add_recourse_vars(b, case, sid, prob, shed_cap):
    for gen in case.generators:
        b.add_var(f"dgu:{sid}:{gen.id}", 0.0, math.inf, prob * gen.c_redisp_up)
    for gen in case.generators:
        b.add_var(f"dgd:{sid}:{gen.id}", 0.0, math.inf, -prob * gen.c_redisp_down)
    for load, cap in zip(case.loads, shed_cap):
        b.add_var(f"dd:{sid}:{load.id}", 0.0, cap, prob * load.c_shed)
    for gen in case.generators:
        b.add_le(f"dgu_cap:{sid}:{gen.id}", {f"dgu:{sid}:{gen.id}": 1.0, f"ru:{gen.id}": -1.0}, 0.0)
    for gen in case.generators:
        b.add_le(f"dgd_cap:{sid}:{gen.id}", {f"dgd:{sid}:{gen.id}": 1.0, f"rd:{gen.id}": -1.0}, 0.0)


def _injection_terms(case, coeff_gen, coeff_load, sid):
    """Coefficient dicts of the scenario's net injections, per generator/load column."""
    terms = {}
    for j, gen in enumerate(case.generators):
        c = coeff_gen[j]
        terms[f"g:{gen.id}"] = c
        terms[f"dgu:{sid}:{gen.id}"] = c
        terms[f"dgd:{sid}:{gen.id}"] = -c
    for l, load in enumerate(case.loads):
        terms[f"dd:{sid}:{load.id}"] = coeff_load[l]
    return terms


def _add_flow_rows(b, scope, lines, ptdf, gen_idx, load_idx, terms_fn, load_mw, cap_attr):
    s_g, s_d = ptdf[:, gen_idx], ptdf[:, load_idx]
    for i, ln in enumerate(lines):
        terms = terms_fn(s_g[i], s_d[i])
        shift = float(s_d[i] @ load_mw)
        cap = getattr(ln, cap_attr)
        b.add_le(f"flow+:{scope}:{ln.id}", terms, cap + shift)
        b.add_le(f"flow-:{scope}:{ln.id}", {k: -v for k, v in terms.items()}, cap - shift)


def _dump(lp, path):
    if path:
        from .casedef import atomic_write
        atomic_write(path, to_lp_text(lp))


def _solve_or_raise(lp, what):
    sol = solve(lp)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError(f"{what} is infeasible")
    if sol.status is not Status.OPTIMAL:
        raise NumericalFailure(f"{what} returned {sol.status.value}")
    return sol


def _indices(case):
    net = case.network
    return (np.array([net.bus_index(g.bus) for g in case.generators], dtype=int),
            np.array([net.bus_index(l.bus) for l in case.loads], dtype=int))


# --------------------------------------------------------------- model (II)

def build_cooptimization_lp(case, fixed=None):
    gen_idx, load_idx = _indices(case)
    d = case.demand
    b = LpBuilder()
    _add_first_stage(b, case, fixed)
    b.add_eq("balance:base", {f"g:{g.id}": 1.0 for g in case.generators}, d.sum())
    base_ptdf = compute_ptdf(case.network)
    _add_flow_rows(b, BASE, case.network.lines, base_ptdf, gen_idx, load_idx,
                   lambda sg, sd: {f"g:{gen.id}": sg[j] for j, gen in enumerate(case.generators)},
                   d, "capacity_base")
    for scen in case.scenarios:
        sid = scen.id
        load_k = d + case.fluctuation(sid)
        _add_recourse_vars(b, case, sid, scen.probability, load_k)
        b.add_eq(f"balance:{sid}", _injection_terms(case, np.ones(len(gen_idx)),
                                                    np.ones(len(load_idx)), sid), load_k.sum())
        ptdf = compute_ptdf(case.network, scen.outaged_line_ids)
        _add_flow_rows(b, sid, case.network.surviving_lines(scen.outaged_line_ids), ptdf,
                       gen_idx, load_idx, lambda sg, sd, sid=sid: _injection_terms(case, sg, sd, sid),
                       load_k, "capacity_scenario")
    return b.build()


def clear_cooptimization(case, dump_lp=None):
    """Clear energy and reserve against every declared scenario (shift-factor form)."""
    lp = build_cooptimization_lp(case)
    _dump(lp, dump_lp)
    sol = _solve_or_raise(lp, "co-optimization model")
    return _extract(case, sol, "coopt")


def build_cooptimization_angle_lp(case):
    gen_buses, load_buses = case.gen_buses(), case.load_buses()
    d = case.demand
    net = case.network
    b = LpBuilder()
    _add_first_stage(b, case)
    scopes = [(BASE, frozenset(), d, "capacity_base", None)]
    for scen in case.scenarios:
        sid = scen.id
        load_k = d + case.fluctuation(sid)
        _add_recourse_vars(b, case, sid, scen.probability, load_k)
        scopes.append((sid, scen.outaged_line_ids, load_k, "capacity_scenario", sid))
    for scope, outaged, load_mw, cap_attr, sid in scopes:
        bbus, flow, a_g, a_d = build_angle_system(net, outaged, gen_buses, load_buses)
        for bus in net.buses:
            fixed = bus == net.reference_bus
            b.add_var(f"theta:{scope}:{bus}", 0.0 if fixed else -math.inf, 0.0 if fixed else math.inf)
        for i, bus in enumerate(net.buses):
            terms = {f"theta:{scope}:{bb}": -bbus[i, k] for k, bb in enumerate(net.buses) if bbus[i, k]}
            for j, gen in enumerate(case.generators):
                if a_g[i, j]:
                    terms[f"g:{gen.id}"] = 1.0
                    if sid is not None:
                        terms[f"dgu:{sid}:{gen.id}"] = 1.0
                        terms[f"dgd:{sid}:{gen.id}"] = -1.0
            if sid is not None:
                for l, load in enumerate(case.loads):
                    if a_d[i, l]:
                        terms[f"dd:{sid}:{load.id}"] = 1.0
            b.add_eq(f"nodal:{scope}:{bus}", terms, float(a_d[i] @ load_mw))
        for r, ln in enumerate(net.surviving_lines(outaged)):
            terms = {f"theta:{scope}:{bb}": flow[r, k] for k, bb in enumerate(net.buses) if flow[r, k]}
            cap = getattr(ln, cap_attr)
            b.add_le(f"flow+:{scope}:{ln.id}", terms, cap)
            b.add_le(f"flow-:{scope}:{ln.id}", {k: -v for k, v in terms.items()}, cap)
    return b.build()


def clear_cooptimization_angle(case, dump_lp=None):
    """Co-optimization on bus angles; nodal balance duals are the bus prices."""
    lp = build_cooptimization_angle_lp(case)
    _dump(lp, dump_lp)
    sol = _solve_or_raise(lp, "angle-form co-optimization model")
    return _extract(case, sol, "angle")


def _extract(case, sol, model):
    gens, loads, lines = case.generators, case.loads, case.network.lines
    scen = case.scenarios
    n_k = len(scen)

    def col(labels):
        return np.array([sol.value(l) for l in labels])

    def row_duals(labels):
        return np.array([sol.dual(l) for l in labels])

    def z_low(labels):
        return np.array([sol.z_lower[sol.labels["col"][l]] for l in labels])

    def z_up(labels):
        return np.array([sol.z_upper[sol.labels["col"][l]] for l in labels])

    def per_scope(fn, keys, width):
        return np.array([fn(keys(s.id)) for s in scen]).reshape(n_k, width)

    def line_mu(sign, scope, outaged=frozenset()):
        return np.array([0.0 if ln.id in outaged else sol.dual(f"flow{sign}:{scope}:{ln.id}")
                         for ln in lines])

    def gen_keys(prefix):
        return lambda sid: [f"{prefix}:{sid}:{g.id}" for g in gens]

    def load_keys(sid):
        return [f"dd:{sid}:{l.id}" for l in loads]

    duals = {
        "mu_plus": line_mu("+", BASE), "mu_minus": line_mu("-", BASE),
        "upsilon_low": row_duals([f"gen_low:{g.id}" for g in gens]),
        "upsilon_up": row_duals([f"gen_high:{g.id}" for g in gens]),
        "rho_up_low": z_low(_gen_cols(case, "ru")), "rho_up_up": z_up(_gen_cols(case, "ru")),
        "rho_down_low": z_low(_gen_cols(case, "rd")), "rho_down_up": z_up(_gen_cols(case, "rd")),
        "ramp_low": z_low(_gen_cols(case, "g")), "ramp_up": z_up(_gen_cols(case, "g")),
        "mu_plus_k": np.array([line_mu("+", s.id, s.outaged_line_ids) for s in scen]).reshape(n_k, len(lines)),
        "mu_minus_k": np.array([line_mu("-", s.id, s.outaged_line_ids) for s in scen]).reshape(n_k, len(lines)),
        "alpha_up": per_scope(row_duals, gen_keys("dgu_cap"), len(gens)),
        "alpha_low": per_scope(z_low, gen_keys("dgu"), len(gens)),
        "beta_up": per_scope(row_duals, gen_keys("dgd_cap"), len(gens)),
        "beta_low": per_scope(z_low, gen_keys("dgd"), len(gens)),
        "tau_up": per_scope(z_up, load_keys, len(loads)),
        "tau_low": per_scope(z_low, load_keys, len(loads)),
    }
    buses = case.network.buses
    if model == "angle":
        duals["nodal"] = row_duals([f"nodal:{BASE}:{b}" for b in buses])
        duals["nodal_k"] = per_scope(row_duals, lambda sid: [f"nodal:{sid}:{b}" for b in buses], len(buses))
    else:
        duals["lambda"] = np.array(sol.dual("balance:base"))
        duals["lambda_k"] = np.array([sol.dual(f"balance:{s.id}") for s in scen])
    return ClearingSolution(
        model=model, generator_ids=case.generator_ids, load_ids=case.load_ids,
        line_ids=tuple(ln.id for ln in lines), bus_ids=buses, scenario_ids=case.scenario_ids,
        g=col(_gen_cols(case, "g")), r_up=col(_gen_cols(case, "ru")), r_down=col(_gen_cols(case, "rd")),
        dg_up=per_scope(col, gen_keys("dgu"), len(gens)),
        dg_down=per_scope(col, gen_keys("dgd"), len(gens)),
        dshed=per_scope(col, load_keys, len(loads)),
        objective=sol.objective, duals={k: np.asarray(v) + 0.0 for k, v in duals.items()},
        kkt_residuals=dict(sol.residuals), iterations=sol.iterations)


def expected_cost(case, solution):
    """Expected system cost recomputed from primal quantities."""
    gens, loads = case.generators, case.loads
    terms = [gen.c_energy * solution.g[j] + gen.c_res_up * solution.r_up[j]
             + gen.c_res_down * solution.r_down[j] for j, gen in enumerate(gens)]
    for k, scen in enumerate(case.scenarios):
        eps = scen.probability
        terms += [eps * (gen.c_redisp_up * solution.dg_up[k, j] - gen.c_redisp_down * solution.dg_down[k, j])
                  for j, gen in enumerate(gens)]
        terms += [eps * load.c_shed * solution.dshed[k, l] for l, load in enumerate(loads)]
    return math.fsum(terms)


# ---------------------------------------------------------------- model (I)

def clear_traditional(case, req_up, req_down, dump_lp=None):
    """Energy dispatch with system-wide reserve requirements ``req_up``/``req_down`` (MW)."""
    if req_up < 0 or req_down < 0:
        raise ValueError("reserve requirements must be >= 0")
    gen_idx, load_idx = _indices(case)
    d = case.demand
    b = LpBuilder()
    _add_first_stage(b, case)
    b.add_eq("balance:base", {f"g:{g.id}": 1.0 for g in case.generators}, d.sum())
    b.add_eq("reserve_req:up", {f"ru:{g.id}": 1.0 for g in case.generators}, req_up)
    b.add_eq("reserve_req:down", {f"rd:{g.id}": 1.0 for g in case.generators}, req_down)
    _add_flow_rows(b, BASE, case.network.lines, compute_ptdf(case.network), gen_idx, load_idx,
                   lambda sg, sd: {f"g:{gen.id}": sg[j] for j, gen in enumerate(case.generators)},
                   d, "capacity_base")
    lp = b.build()
    _dump(lp, dump_lp)
    sol = _solve_or_raise(lp, f"traditional model (R_up={req_up}, R_down={req_down})")
    gens, lines = case.generators, case.network.lines
    duals = {
        "lambda": np.array(sol.dual("balance:base")),
        "mu_plus": np.array([sol.dual(f"flow+:{BASE}:{ln.id}") for ln in lines]),
        "mu_minus": np.array([sol.dual(f"flow-:{BASE}:{ln.id}") for ln in lines]),
        "gamma_up": np.array(sol.dual("reserve_req:up")),
        "gamma_down": np.array(sol.dual("reserve_req:down")),
        "upsilon_low": np.array([sol.dual(f"gen_low:{g.id}") for g in gens]),
        "upsilon_up": np.array([sol.dual(f"gen_high:{g.id}") for g in gens]),
    }
    return TraditionalSolution(
        generator_ids=case.generator_ids, line_ids=tuple(ln.id for ln in lines),
        bus_ids=case.network.buses, req_up=float(req_up), req_down=float(req_down),
        g=np.array([sol.value(f"g:{g.id}") for g in gens]),
        r_up=np.array([sol.value(f"ru:{g.id}") for g in gens]),
        r_down=np.array([sol.value(f"rd:{g.id}") for g in gens]),
        objective=sol.objective, duals=duals, kkt_residuals=dict(sol.residuals))


# ----------------------------------------------------------------- recourse

def solve_recourse(case, scenario_id, fixed_g, fixed_r_up, fixed_r_down):
    """Cheapest re-dispatch/shedding in one scenario with first stage fixed.

    ``scenario_id`` may be ``"base"`` for the forecast network and load.
    Infeasible re-adjustment is reported with ``feasible=False`` and the
    configured penalty as cost.
    """
    if scenario_id == BASE:
        outaged, delta, cap_attr = frozenset(), np.zeros(len(case.loads)), "capacity_base"
    else:
        scen = case.scenario(scenario_id)
        outaged, delta, cap_attr = scen.outaged_line_ids, case.fluctuation(scenario_id), "capacity_scenario"
    fixed_g = np.asarray(fixed_g, dtype=float)
    fixed_r_up = np.asarray(fixed_r_up, dtype=float)
    fixed_r_down = np.asarray(fixed_r_down, dtype=float)
    gen_idx, load_idx = _indices(case)
    load_k = case.demand + delta
    sid = scenario_id
    b = LpBuilder()
    for j, gen in enumerate(case.generators):
        b.add_var(f"dgu:{sid}:{gen.id}", 0.0, max(fixed_r_up[j], 0.0), gen.c_redisp_up)
    for j, gen in enumerate(case.generators):
        b.add_var(f"dgd:{sid}:{gen.id}", 0.0, max(fixed_r_down[j], 0.0), -gen.c_redisp_down)
    for load, cap in zip(case.loads, load_k):
        b.add_var(f"dd:{sid}:{load.id}", 0.0, cap, load.c_shed)

    def terms(coeff_gen, coeff_load):
        out = {}
        for j, gen in enumerate(case.generators):
            out[f"dgu:{sid}:{gen.id}"] = coeff_gen[j]
            out[f"dgd:{sid}:{gen.id}"] = -coeff_gen[j]
        for l, load in enumerate(case.loads):
            out[f"dd:{sid}:{load.id}"] = coeff_load[l]
        return out

    b.add_eq(f"balance:{sid}", terms(np.ones(len(gen_idx)), np.ones(len(load_idx))),
             load_k.sum() - fixed_g.sum())
    ptdf = compute_ptdf(case.network, outaged)
    s_g, s_d = ptdf[:, gen_idx], ptdf[:, load_idx]
    for i, ln in enumerate(case.network.surviving_lines(outaged)):
        row = terms(s_g[i], s_d[i])
        shift = float(s_d[i] @ load_k - s_g[i] @ fixed_g)
        cap = getattr(ln, cap_attr)
        b.add_le(f"flow+:{sid}:{ln.id}", row, cap + shift)
        b.add_le(f"flow-:{sid}:{ln.id}", {k: -v for k, v in row.items()}, cap - shift)
    lp = b.build()
    sol = solve(lp)
    if sol.status is Status.INFEASIBLE:
        return RecourseResult(sid, False, float(case.options.infeasible_recourse_penalty))
    if sol.status is not Status.OPTIMAL:
        raise NumericalFailure(f"recourse LP for {sid} returned {sol.status.value}")
    n_g = len(case.generators)
    return RecourseResult(sid, True, float(sol.objective), dg_up=sol.x[:n_g].copy(),
                          dg_down=sol.x[n_g:2 * n_g].copy(), dshed=sol.x[2 * n_g:].copy())
