"""Two-stage settlement: ex-ante credits and charges, ex-post paid-as-bid
re-dispatch and shedding, congestion rent, and the money-flow matrix.

Scenario-column entries are probability weighted where the underlying
quantity is (re-dispatch and shedding appear as ``eps * Phi``).
"""
import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import SchemeMismatch, UnknownScenario

SCHEMES = ("ex-ante", "ex-post")

MONEY_FLOW_ROWS = ("Gamma^d", "Gamma^pi", "Gamma^g", "Gamma^U", "Gamma^D",
                   "eps*Phi^U", "eps*Phi^D", "eps*Phi^d", "Delta")

_ARRAYS = ("probabilities", "gamma_g_base", "gamma_g_k", "gamma_d_base", "gamma_d_k",
           "gamma_pi_k", "gamma_up_k", "gamma_down_k", "phi_up_k", "phi_down_k", "phi_d_k",
           "pi_up_k", "pi_down_k", "delta_k", "shed_correction_k", "load_headline",
           "realized_phi_up", "realized_phi_down", "realized_phi_d")


@dataclass(frozen=True)
class SettlementReport:
    """All settlement entries; per-scenario arrays have scenarios on axis 0.

    ``phi_*_k`` are unweighted paid-as-bid amounts; the money-flow matrix
    multiplies them by the scenario probability. ``shed_correction_k`` is the
    term that enters the per-scenario balance when a load is fully shed.
    """
    kind = "settlement_report"

    scheme: str
    realized: str
    scenario_ids: tuple
    generator_ids: tuple
    load_ids: tuple
    probabilities: np.ndarray
    gamma_g_base: np.ndarray
    gamma_g_k: np.ndarray
    gamma_d_base: np.ndarray
    gamma_d_k: np.ndarray
    gamma_pi_k: np.ndarray
    gamma_up_k: np.ndarray
    gamma_down_k: np.ndarray
    phi_up_k: np.ndarray
    phi_down_k: np.ndarray
    phi_d_k: np.ndarray
    pi_up_k: np.ndarray
    pi_down_k: np.ndarray
    delta_base: float
    delta_k: np.ndarray
    shed_correction_k: np.ndarray
    load_headline: np.ndarray
    realized_phi_up: np.ndarray
    realized_phi_down: np.ndarray
    realized_phi_d: np.ndarray

    def money_flow(self):
        """``(row labels, column labels, matrix)`` with Base, scenarios, Total."""
        eps = self.probabilities[:, None]
        n_k = len(self.scenario_ids)

        def row(base, per_k):
            vals = [base] + [float(v) for v in per_k]
            return vals + [math.fsum(vals)]

        zeros = np.zeros(n_k)
        rows = [
            row(self.gamma_d_base.sum(), self.gamma_d_k.sum(axis=1)),
            row(0.0, self.gamma_pi_k.sum(axis=1) if n_k else zeros),
            row(self.gamma_g_base.sum(), self.gamma_g_k.sum(axis=1)),
            row(0.0, self.gamma_up_k.sum(axis=1)),
            row(0.0, self.gamma_down_k.sum(axis=1)),
            row(0.0, (eps * self.phi_up_k).sum(axis=1)),
            row(0.0, (eps * self.phi_down_k).sum(axis=1)),
            row(0.0, (eps * self.phi_d_k).sum(axis=1)),
            row(self.delta_base, self.delta_k),
        ]
        cols = ("Base",) + tuple(self.scenario_ids) + ("Total",)
        return MONEY_FLOW_ROWS, cols, np.array(rows).reshape(len(rows), n_k + 2)

    def balance_residuals(self):
        """Per-column revenue-adequacy residual (Base, scenarios), shedding-corrected."""
        _, _, mat = self.money_flow()
        pay = mat[0] + mat[1]
        credit = mat[2:8].sum(axis=0)
        resid = pay - credit - mat[8]
        resid[1:-1] -= self.shed_correction_k
        resid[-1] -= self.shed_correction_k.sum()
        return resid[:-1]

    @property
    def total_profit_credit(self):
        return self.gamma_g_base + self.gamma_g_k.sum(axis=0)

    def to_csv(self, decimals=1):
        rows, cols, mat = self.money_flow()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(cols))
        fmt = f"{{:.{decimals}f}}"
        for label, vals in zip(rows, mat):
            w.writerow([label] + [fmt.format(round(v, decimals) + 0.0) for v in vals])
        if self.realized is not None and self.realized != "base":
            w.writerow([])
            w.writerow([f"realized {self.realized}", "Phi^U", "Phi^D", "Phi^d"])
            w.writerow(["total"] + [fmt.format(round(float(v.sum()), decimals) + 0.0) for v in
                                    (self.realized_phi_up, self.realized_phi_down, self.realized_phi_d)])
        return buf.getvalue()

    def to_dict(self):
        doc = {"kind": self.kind, "scheme": self.scheme, "realized": self.realized,
               "scenario_ids": list(self.scenario_ids), "generator_ids": list(self.generator_ids),
               "load_ids": list(self.load_ids), "delta_base": self.delta_base}
        for name in _ARRAYS:
            doc[name] = np.asarray(getattr(self, name)).tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        n_k, n_g, n_l = len(doc["scenario_ids"]), len(doc["generator_ids"]), len(doc["load_ids"])
        shapes = {"gamma_g_k": (n_k, n_g), "gamma_up_k": (n_k, n_g), "gamma_down_k": (n_k, n_g),
                  "phi_up_k": (n_k, n_g), "phi_down_k": (n_k, n_g), "pi_up_k": (n_k, n_g),
                  "pi_down_k": (n_k, n_g), "gamma_d_k": (n_k, n_l), "gamma_pi_k": (n_k, n_l),
                  "phi_d_k": (n_k, n_l)}
        arrays = {}
        for name in _ARRAYS:
            a = np.asarray(doc[name], dtype=float)
            arrays[name] = a.reshape(shapes[name]) if name in shapes else a
        return cls(scheme=doc["scheme"], realized=doc["realized"],
                   scenario_ids=tuple(doc["scenario_ids"]), generator_ids=tuple(doc["generator_ids"]),
                   load_ids=tuple(doc["load_ids"]), delta_base=float(doc["delta_base"]), **arrays)


def congestion_rent(case, solution):
    """``(base rent, per-scenario rents, total)`` from flow-limit duals."""
    lines = case.network.lines
    f_base = np.array([ln.capacity_base for ln in lines])
    f_k = np.array([ln.capacity_scenario for ln in lines])
    d = solution.duals
    base = float(f_base @ (d["mu_plus"] + d["mu_minus"]))
    per_k = (d["mu_plus_k"] + d["mu_minus_k"]) @ f_k if len(case.scenarios) else np.zeros(0)
    return base, per_k, math.fsum([base, *per_k])


def settle(case, solution, prices, scheme="ex-ante", realized=None):
    """Settlement of a cleared case.

    ``scheme="ex-post"`` charges fluctuations only for the ``realized``
    scenario, at the bus price divided by its probability. ``realized`` may
    also be given under the ex-ante scheme to record the realized paid-as-bid
    amounts.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if scheme == "ex-post" and realized is None:
        raise SchemeMismatch("ex-post settlement needs a realized scenario")
    n_k, n_g, n_l = len(case.scenarios), len(case.generators), len(case.loads)
    eps = case.probabilities.reshape(n_k)
    if realized is not None and realized != "base":
        k_real = case.scenario_ids.index(realized) if realized in case.scenario_ids else None
        if k_real is None:
            raise UnknownScenario(realized)
        if scheme == "ex-post" and not eps[k_real] > 0:
            raise SchemeMismatch(f"scenario {realized} has zero probability")
    else:
        k_real = None
    gb = [prices.bus_index(g.bus) for g in case.generators]
    lb = [prices.bus_index(l.bus) for l in case.loads]
    omega_g0, omega_l0 = prices.omega_base[gb], prices.omega_base[lb]
    omega_gk = prices.omega_k[:, gb].reshape(n_k, n_g)
    omega_lk = prices.omega_k[:, lb].reshape(n_k, n_l)
    d = case.demand
    pi = np.array([case.fluctuation(s.id) for s in case.scenarios]).reshape(n_k, n_l)
    duals = solution.duals
    alpha = np.asarray(duals["alpha_up"]).reshape(n_k, n_g)
    beta = np.asarray(duals["beta_up"]).reshape(n_k, n_g)
    tau = np.asarray(duals["tau_up"]).reshape(n_k, n_l)

    c_up = np.array([g.c_redisp_up for g in case.generators])
    c_down = np.array([g.c_redisp_down for g in case.generators])
    c_shed = np.array([l.c_shed for l in case.loads])
    phi_up = c_up * solution.dg_up
    phi_down = -c_down * solution.dg_down
    phi_d = c_shed * solution.dshed
    gamma_up = alpha * solution.r_up
    gamma_down = beta * solution.r_down

    if scheme == "ex-ante":
        gamma_pi = omega_lk * pi
    else:
        gamma_pi = np.zeros((n_k, n_l))
        if k_real is not None:
            gamma_pi[k_real] = omega_lk[k_real] / eps[k_real] * pi[k_real]

    base_rent, rent_k, _ = congestion_rent(case, solution)
    realized_phi = [np.zeros(n_g), np.zeros(n_g), np.zeros(n_l)]
    if k_real is not None:
        realized_phi = [phi_up[k_real], phi_down[k_real], phi_d[k_real]]
    return SettlementReport(
        scheme=scheme, realized=realized, scenario_ids=case.scenario_ids,
        generator_ids=case.generator_ids, load_ids=case.load_ids, probabilities=eps,
        gamma_g_base=omega_g0 * solution.g, gamma_g_k=omega_gk * solution.g,
        gamma_d_base=omega_l0 * d, gamma_d_k=omega_lk * d, gamma_pi_k=gamma_pi,
        gamma_up_k=gamma_up, gamma_down_k=gamma_down,
        phi_up_k=phi_up, phi_down_k=phi_down, phi_d_k=phi_d,
        pi_up_k=gamma_up + eps[:, None] * phi_up, pi_down_k=gamma_down + eps[:, None] * phi_down,
        delta_base=base_rent, delta_k=np.asarray(rent_k).reshape(n_k),
        shed_correction_k=(tau * (d + pi)).sum(axis=1),
        load_headline=prices.eta_d * d,
        realized_phi_up=realized_phi[0], realized_phi_down=realized_phi[1],
        realized_phi_d=realized_phi[2])


def generator_profit(case, solution, prices, realized=None):
    """Per-generator profit along the realized path (``None``: base case).

    Credits are the energy and reserve prices times cleared quantities plus
    paid-as-bid re-dispatch in the realized scenario; costs are the bids for
    the same quantities.
    """
    if realized is None or realized == "base":
        up, down = np.zeros(len(case.generators)), np.zeros(len(case.generators))
    else:
        k = solution.scenario_index(realized) if realized in case.scenario_ids else None
        if k is None:
            raise UnknownScenario(realized)
        up, down = solution.dg_up[k], solution.dg_down[k]
    out = {}
    for j, gen in enumerate(case.generators):
        credit = [prices.eta_g[j] * solution.g[j], prices.eta_up[j] * solution.r_up[j],
                  prices.eta_down[j] * solution.r_down[j],
                  gen.c_redisp_up * up[j], -gen.c_redisp_down * down[j]]
        cost = [gen.c_energy * solution.g[j], gen.c_res_up * solution.r_up[j],
                gen.c_res_down * solution.r_down[j],
                gen.c_redisp_up * up[j], -gen.c_redisp_down * down[j]]
        out[gen.id] = math.fsum(credit) - math.fsum(cost)
    return out


def fluctuation_payment(case, prices, scheme, realized=None):
    """Total fluctuation charge to loads in one trial."""
    lb = [prices.bus_index(l.bus) for l in case.loads]
    if scheme == "ex-ante":
        return math.fsum(float(prices.omega_k[k, lb] @ case.fluctuation(s.id))
                         for k, s in enumerate(case.scenarios))
    if realized is None or realized == "base":
        return 0.0
    k = case.scenario_ids.index(realized)
    return float(prices.omega_k[k, lb] @ case.fluctuation(realized)) / case.scenarios[k].probability
