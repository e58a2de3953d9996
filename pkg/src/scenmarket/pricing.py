"""Energy and reserve prices read off the clearing duals.

Bus price components are ``omega_base[b] = lambda - S[:, b] @ (mu_plus - mu_minus)``
and the per-scenario analogue; resource prices sum them over base and
scenarios. Reserve prices are sums of the re-dispatch capacity duals.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingDuals, UnknownBus, UnknownScenario
from .netmodel import compute_ptdf

_REQUIRED = ("mu_plus", "mu_minus", "mu_plus_k", "mu_minus_k", "alpha_up", "beta_up", "tau_up")


@dataclass(frozen=True)
class PriceReport:
    kind = "price_report"

    bus_ids: tuple
    scenario_ids: tuple
    generator_ids: tuple
    load_ids: tuple
    generator_bus: tuple
    load_bus: tuple
    energy_base: float
    energy_k: np.ndarray
    omega_base: np.ndarray
    omega_k: np.ndarray
    eta_g: np.ndarray
    eta_d: np.ndarray
    eta_up: np.ndarray
    eta_down: np.ndarray
    shed_adjust: np.ndarray
    shed_flags: tuple = ()
    notes: tuple = field(default=())

    @property
    def congestion_base(self):
        return self.omega_base - self.energy_base

    @property
    def congestion_k(self):
        return self.omega_k - self.energy_k[:, None]

    def bus_index(self, bus):
        try:
            return self.bus_ids.index(str(bus))
        except ValueError:
            raise UnknownBus(bus) from None

    def scenario_index(self, scenario_id):
        try:
            return self.scenario_ids.index(scenario_id)
        except ValueError:
            raise UnknownScenario(scenario_id) from None

    def omega_at(self, bus, scenario_id=None):
        b = self.bus_index(bus)
        if scenario_id is None:
            return float(self.omega_base[b])
        return float(self.omega_k[self.scenario_index(scenario_id), b])

    def generator(self, gen_id):
        j = self.generator_ids.index(gen_id)
        return {"eta_g": float(self.eta_g[j]), "eta_up": float(self.eta_up[j]),
                "eta_down": float(self.eta_down[j])}

    def to_dict(self):
        return {
            "kind": self.kind, "bus_ids": list(self.bus_ids), "scenario_ids": list(self.scenario_ids),
            "generator_ids": list(self.generator_ids), "load_ids": list(self.load_ids),
            "generator_bus": list(self.generator_bus), "load_bus": list(self.load_bus),
            "energy_base": self.energy_base, "energy_k": self.energy_k.tolist(),
            "omega_base": self.omega_base.tolist(), "omega_k": self.omega_k.tolist(),
            "eta_g": self.eta_g.tolist(), "eta_d": self.eta_d.tolist(),
            "eta_up": self.eta_up.tolist(), "eta_down": self.eta_down.tolist(),
            "shed_adjust": self.shed_adjust.tolist(),
            "shed_flags": [list(f) for f in self.shed_flags], "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, doc):
        n_b, n_k = len(doc["bus_ids"]), len(doc["scenario_ids"])
        return cls(
            bus_ids=tuple(doc["bus_ids"]), scenario_ids=tuple(doc["scenario_ids"]),
            generator_ids=tuple(doc["generator_ids"]), load_ids=tuple(doc["load_ids"]),
            generator_bus=tuple(doc["generator_bus"]), load_bus=tuple(doc["load_bus"]),
            energy_base=float(doc["energy_base"]),
            energy_k=np.asarray(doc["energy_k"], dtype=float),
            omega_base=np.asarray(doc["omega_base"], dtype=float),
            omega_k=np.asarray(doc["omega_k"], dtype=float).reshape(n_k, n_b),
            eta_g=np.asarray(doc["eta_g"], dtype=float), eta_d=np.asarray(doc["eta_d"], dtype=float),
            eta_up=np.asarray(doc["eta_up"], dtype=float),
            eta_down=np.asarray(doc["eta_down"], dtype=float),
            shed_adjust=np.asarray(doc["shed_adjust"], dtype=float),
            shed_flags=tuple(tuple(f) for f in doc.get("shed_flags", ())),
            notes=tuple(doc.get("notes", ())))

    def to_csv(self, decimals=4):
        """Per-bus table: one row per (bus, scope) with energy/congestion split."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bus", "scope", "energy", "congestion", "omega"])
        fmt = f"{{:.{decimals}f}}"
        for b, bus in enumerate(self.bus_ids):
            w.writerow([bus, "base", fmt.format(self.energy_base),
                        fmt.format(self.congestion_base[b] + 0.0), fmt.format(self.omega_base[b])])
            for k, sid in enumerate(self.scenario_ids):
                w.writerow([bus, sid, fmt.format(self.energy_k[k]),
                            fmt.format(self.congestion_k[k, b] + 0.0), fmt.format(self.omega_k[k, b])])
        return buf.getvalue()


def compute_prices(case, solution):
    """Price report for a co-optimization solution (shift-factor or angle form)."""
    duals = solution.duals
    missing = [k for k in _REQUIRED if k not in duals]
    if solution.model == "angle":
        missing += [k for k in ("nodal", "nodal_k") if k not in duals]
    else:
        missing += [k for k in ("lambda", "lambda_k") if k not in duals]
    if missing:
        raise MissingDuals(f"solution lacks duals {missing}")
    net = case.network
    n_k = len(case.scenarios)
    ref = net.bus_index(net.reference_bus)
    if solution.model == "angle":
        omega_base = np.asarray(duals["nodal"], dtype=float)
        omega_k = np.asarray(duals["nodal_k"], dtype=float).reshape(n_k, net.n_buses)
        energy_base = float(omega_base[ref])
        energy_k = omega_k[:, ref].copy()
    else:
        energy_base = float(duals["lambda"])
        energy_k = np.asarray(duals["lambda_k"], dtype=float).reshape(n_k)
        net_mu = duals["mu_plus"] - duals["mu_minus"]
        omega_base = energy_base - compute_ptdf(net).T @ net_mu
        omega_k = np.empty((n_k, net.n_buses))
        for k, scen in enumerate(case.scenarios):
            keep = [i for i, ln in enumerate(net.lines) if ln.id not in scen.outaged_line_ids]
            mu_k = (duals["mu_plus_k"][k] - duals["mu_minus_k"][k])[keep]
            omega_k[k] = energy_k[k] - compute_ptdf(net, scen.outaged_line_ids).T @ mu_k
    gen_b = np.array([net.bus_index(g.bus) for g in case.generators], dtype=int)
    load_b = np.array([net.bus_index(l.bus) for l in case.loads], dtype=int)
    total_bus = omega_base + omega_k.sum(axis=0)
    tau = np.asarray(duals["tau_up"], dtype=float).reshape(n_k, len(case.loads))
    shed_adjust = tau.sum(axis=0)
    tol = case.options.dual_tol
    flags = tuple((case.scenarios[k].id, case.loads[l].id)
                  for k, l in zip(*np.nonzero(tau > tol)))
    notes = ()
    if flags:
        notes = ("fully shed loads present: load prices include the shedding adjustment",)
    return PriceReport(
        bus_ids=net.buses, scenario_ids=case.scenario_ids, generator_ids=case.generator_ids,
        load_ids=case.load_ids, generator_bus=tuple(g.bus for g in case.generators),
        load_bus=tuple(l.bus for l in case.loads),
        energy_base=energy_base, energy_k=energy_k, omega_base=omega_base, omega_k=omega_k,
        eta_g=total_bus[gen_b], eta_d=total_bus[load_b] - shed_adjust,
        eta_up=np.asarray(duals["alpha_up"]).reshape(n_k, len(gen_b)).sum(axis=0),
        eta_down=np.asarray(duals["beta_up"]).reshape(n_k, len(gen_b)).sum(axis=0),
        shed_adjust=shed_adjust, shed_flags=flags, notes=notes)


def price_decomposition(report, bus, scenario_id=None):
    """``(energy, congestion)`` parts of the bus price, base case or one scenario."""
    b = report.bus_index(bus)
    if scenario_id is None:
        return report.energy_base, float(report.congestion_base[b])
    k = report.scenario_index(scenario_id)
    return float(report.energy_k[k]), float(report.congestion_k[k, b])


def price_stability(case, step=1e-7):
    """Largest change of any resource price under +-``step`` MW demand nudges.

    A value near zero means the optimal basis (and so the price vector) is
    locally unique; large values flag dual degeneracy.
    """
    from dataclasses import replace

    from .clearing import clear_cooptimization

    def prices(c):
        rep = compute_prices(c, clear_cooptimization(c))
        return np.concatenate([rep.eta_g, rep.eta_d, rep.eta_up, rep.eta_down])

    ref = prices(case)
    worst = 0.0
    for l, load in enumerate(case.loads):
        for sign in (1.0, -1.0):
            loads = list(case.loads)
            loads[l] = replace(load, demand=load.demand + sign * step)
            worst = max(worst, float(np.abs(prices(replace(case, loads=tuple(loads))) - ref).max()))
    return worst
