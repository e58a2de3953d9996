"""Market case data model, validation and file I/O.

A case file is a JSON document::

    {"name": ..., "buses": [...], "reference_bus": optional,
     "lines": [{"id", "from", "to", "reactance", "capacity_base", "capacity_scenario"}],
     "generators": [{"id", "bus", "g_max", "g_min", "ramp_up", "ramp_down",
                     "c_energy", "c_res_up", "c_res_down",
                     "c_redisp_up", "c_redisp_down"}],
     "loads": [{"id", "bus", "demand", "c_shed", "fluctuation": {scenario: MW}}],
     "scenarios": [{"id", "probability", "outaged_lines": [...]}],
     "options": {...}}

Units are MW and $/MWh throughout.
"""
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import ParseError, ValidationError
from .netmodel import Line, Network, is_connected


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    g_max: float
    ramp_up: float
    ramp_down: float
    c_energy: float
    c_res_up: float
    c_res_down: float
    g_min: float = 0.0
    c_redisp_up: float = None
    c_redisp_down: float = None

    def __post_init__(self):
        object.__setattr__(self, "bus", str(self.bus))
        # re-dispatch defaults to the energy bid
        if self.c_redisp_up is None:
            object.__setattr__(self, "c_redisp_up", self.c_energy)
        if self.c_redisp_down is None:
            object.__setattr__(self, "c_redisp_down", self.c_energy)
        where = f"generators[{self.id}]"
        for name in ("g_max", "g_min", "ramp_up", "ramp_down", "c_energy", "c_res_up",
                     "c_res_down", "c_redisp_up", "c_redisp_down"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{where}.{name}", "must be finite")
        if not 0 <= self.g_min <= self.g_max:
            raise ValidationError(where, f"need 0 <= g_min <= g_max, got {self.g_min}, {self.g_max}")
        if self.ramp_up < 0 or self.ramp_down < 0:
            raise ValidationError(where, "ramp limits must be >= 0")


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    demand: float
    c_shed: float
    fluctuation: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bus", str(self.bus))
        object.__setattr__(self, "fluctuation", {str(k): float(v) for k, v in self.fluctuation.items()})
        where = f"loads[{self.id}]"
        if not math.isfinite(self.demand) or self.demand < 0:
            raise ValidationError(f"{where}.demand", "must be finite and >= 0")
        if not math.isfinite(self.c_shed):
            raise ValidationError(f"{where}.c_shed", "must be finite")

    def delta(self, scenario_id):
        return self.fluctuation.get(scenario_id, 0.0)


@dataclass(frozen=True)
class Scenario:
    id: str
    probability: float
    outaged_line_ids: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "outaged_line_ids", frozenset(self.outaged_line_ids))
        if not 0 < self.probability < 1:
            raise ValidationError(f"scenarios[{self.id}].probability", "must lie in (0, 1)")


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-9
    dual_tol: float = 1e-7
    settlement_tol: float = 1e-6
    infeasible_recourse_penalty: float = 20000.0
    ramp_anchor: dict = None

    def __post_init__(self):
        for name in ("feas_tol", "dual_tol", "settlement_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"options.{name}", "must be > 0")
        if not self.infeasible_recourse_penalty >= 0:
            raise ValidationError("options.infeasible_recourse_penalty", "must be >= 0")
        if self.ramp_anchor is not None:
            object.__setattr__(self, "ramp_anchor", {str(k): float(v) for k, v in self.ramp_anchor.items()})


@dataclass(frozen=True)
class MarketCase:
    network: Network
    generators: tuple
    loads: tuple
    scenarios: tuple = ()
    options: SolveOptions = field(default_factory=SolveOptions)
    name: str = "case"

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        validate_case(self)

    @property
    def generator_ids(self):
        return tuple(g.id for g in self.generators)

    @property
    def load_ids(self):
        return tuple(l.id for l in self.loads)

    @property
    def scenario_ids(self):
        return tuple(s.id for s in self.scenarios)

    @property
    def base_probability(self):
        return 1.0 - math.fsum(s.probability for s in self.scenarios)

    @property
    def probabilities(self):
        return np.array([s.probability for s in self.scenarios])

    @property
    def demand(self):
        return np.array([l.demand for l in self.loads])

    def fluctuation(self, scenario_id):
        """Signed load deltas (loads order) in one scenario."""
        return np.array([l.delta(scenario_id) for l in self.loads])

    def scenario(self, scenario_id):
        from .errors import UnknownScenario
        for s in self.scenarios:
            if s.id == scenario_id:
                return s
        raise UnknownScenario(scenario_id)

    @property
    def gmin_zero(self):
        """Assumption (vii): every generator has a zero lower limit."""
        return all(g.g_min == 0 for g in self.generators)

    def gen_buses(self):
        return [g.bus for g in self.generators]

    def load_buses(self):
        return [l.bus for l in self.loads]

    def with_options(self, **changes):
        return replace(self, options=replace(self.options, **changes))

    def with_reference(self, bus):
        return replace(self, network=self.network.with_reference(bus))

    def replace_generator(self, gen_id, **changes):
        gens = tuple(replace(g, **changes) if g.id == gen_id else g for g in self.generators)
        return replace(self, generators=gens)


def validate_case(case):
    net = case.network
    if not case.generators:
        raise ValidationError("generators", "at least one generator is required")
    if not case.loads:
        raise ValidationError("loads", "at least one load is required")
    for kind, items in (("generators", case.generators), ("loads", case.loads),
                        ("scenarios", case.scenarios)):
        ids = [it.id for it in items]
        if len(set(ids)) != len(ids):
            raise ValidationError(kind, "ids must be unique")
    for g in case.generators:
        if g.bus not in net.buses:
            raise ValidationError(f"generators[{g.id}].bus", f"unknown bus {g.bus!r}")
    scen_ids = {s.id for s in case.scenarios}
    for l in case.loads:
        if l.bus not in net.buses:
            raise ValidationError(f"loads[{l.id}].bus", f"unknown bus {l.bus!r}")
        for sid in l.fluctuation:
            if sid not in scen_ids:
                raise ValidationError(f"loads[{l.id}].fluctuation", f"unknown scenario {sid!r}")
        for s in case.scenarios:
            if l.demand + l.delta(s.id) < 0:
                raise ValidationError(f"loads[{l.id}].fluctuation[{s.id}]",
                                      "demand + fluctuation must be >= 0")
    line_ids = {ln.id for ln in net.lines}
    for s in case.scenarios:
        for lid in s.outaged_line_ids:
            if lid not in line_ids:
                raise ValidationError(f"scenarios[{s.id}].outaged_lines", f"unknown line {lid!r}")
        if not is_connected(net, s.outaged_line_ids):
            raise ValidationError(f"scenarios[{s.id}].outaged_lines", "outage islands the network")
    total = math.fsum(s.probability for s in case.scenarios)
    if total >= 1:
        raise ValidationError("scenarios.probability", f"probabilities sum to {total} >= 1")
    anchor = case.options.ramp_anchor or {}
    gen_ids = {g.id for g in case.generators}
    for gid in anchor:
        if gid not in gen_ids:
            raise ValidationError(f"options.ramp_anchor[{gid}]", "unknown generator")


# ---------------------------------------------------------------- file I/O

def case_from_dict(doc):
    try:
        lines = [Line(str(ln["id"]), str(ln["from"]), str(ln["to"]),
                      float(ln.get("reactance", 0.1)), float(ln["capacity_base"]),
                      float(ln.get("capacity_scenario", ln["capacity_base"])))
                 for ln in doc["lines"]]
        network = Network(tuple(str(b) for b in doc["buses"]), tuple(lines),
                          reference_bus=doc.get("reference_bus"))
        gens = [Generator(id=str(g["id"]), bus=str(g["bus"]), g_max=float(g["g_max"]),
                          g_min=float(g.get("g_min", 0.0)),
                          ramp_up=float(g["ramp_up"]), ramp_down=float(g["ramp_down"]),
                          c_energy=float(g["c_energy"]), c_res_up=float(g["c_res_up"]),
                          c_res_down=float(g["c_res_down"]),
                          c_redisp_up=_opt_float(g.get("c_redisp_up")),
                          c_redisp_down=_opt_float(g.get("c_redisp_down")))
                for g in doc["generators"]]
        loads = [Load(str(l["id"]), str(l["bus"]), float(l["demand"]), float(l["c_shed"]),
                      {str(k): float(v) for k, v in l.get("fluctuation", {}).items()})
                 for l in doc["loads"]]
        scens = [Scenario(str(s["id"]), float(s["probability"]),
                          frozenset(str(x) for x in s.get("outaged_lines", ())))
                 for s in doc.get("scenarios", ())]
        opts = dict(doc.get("options", {}))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(f"malformed case document: {exc!r}") from exc
    unknown = set(opts) - {"feas_tol", "dual_tol", "settlement_tol",
                           "infeasible_recourse_penalty", "ramp_anchor"}
    if unknown:
        raise ValidationError("options", f"unknown keys {sorted(unknown)}")
    return MarketCase(network, gens, loads, scens, SolveOptions(**opts), name=str(doc.get("name", "case")))


def _opt_float(value):
    return None if value is None else float(value)


def case_to_dict(case):
    opts = case.options
    doc_opts = {"feas_tol": opts.feas_tol, "dual_tol": opts.dual_tol,
                "settlement_tol": opts.settlement_tol,
                "infeasible_recourse_penalty": opts.infeasible_recourse_penalty}
    if opts.ramp_anchor is not None:
        doc_opts["ramp_anchor"] = dict(opts.ramp_anchor)
    return {
        "name": case.name,
        "buses": list(case.network.buses),
        "reference_bus": case.network.reference_bus,
        "lines": [{"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "reactance": ln.reactance,
                   "capacity_base": ln.capacity_base, "capacity_scenario": ln.capacity_scenario}
                  for ln in case.network.lines],
        "generators": [{"id": g.id, "bus": g.bus, "g_max": g.g_max, "g_min": g.g_min,
                        "ramp_up": g.ramp_up, "ramp_down": g.ramp_down,
                        "c_energy": g.c_energy, "c_res_up": g.c_res_up, "c_res_down": g.c_res_down,
                        "c_redisp_up": g.c_redisp_up, "c_redisp_down": g.c_redisp_down}
                       for g in case.generators],
        "loads": [{"id": l.id, "bus": l.bus, "demand": l.demand, "c_shed": l.c_shed,
                   "fluctuation": dict(l.fluctuation)} for l in case.loads],
        "scenarios": [{"id": s.id, "probability": s.probability,
                       "outaged_lines": sorted(s.outaged_line_ids)} for s in case.scenarios],
        "options": doc_opts,
    }


def load_case(path):
    """Read and validate a case file. ``builtin:two_bus`` names the bundled fixture."""
    path = str(path)
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        try:
            text = resources.files("scenmarket.data").joinpath(f"{name}.json").read_text()
        except (FileNotFoundError, OSError):
            raise ParseError(f"no builtin case named {name!r}") from None
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    return case_from_dict(doc)


def save_case(case, path):
    atomic_write(path, json.dumps(case_to_dict(case), indent=2) + "\n")


def atomic_write(path, text):
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_results(report, path, decimals=1):
    """Persist a solution/report. ``.csv`` paths get the tabular rendering."""
    path = os.fspath(path)
    if path.endswith(".csv"):
        if not hasattr(report, "to_csv"):
            raise TypeError(f"{type(report).__name__} has no CSV rendering")
        atomic_write(path, report.to_csv(decimals=decimals))
    else:
        atomic_write(path, json.dumps(report.to_dict(), indent=2) + "\n")


def load_results(path):
    from .clearing import ClearingSolution, TraditionalSolution
    from .pricing import PriceReport
    from .settlement import SettlementReport

    kinds = {cls.kind: cls for cls in (ClearingSolution, TraditionalSolution, PriceReport,
                                       SettlementReport)}
    with open(path) as fh:
        doc = json.load(fh)
    try:
        cls = kinds[doc["kind"]]
    except KeyError:
        raise ParseError(f"{path}: unknown result kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc)


def builtin_two_bus():
    """Two-bus reference case with three generators and three loads.

    G1 and L1 sit at bus 1; G2, G3, L2 and L3 at bus 2. Two identical
    parallel lines (1 MW base, 1.2 MW in non-base scenarios each). Scenario
    loads are stored as deltas against the base vector (6, 15, 4).
    """
    lines = (Line("line_a", "1", "2", 0.1, 1.0, 1.2), Line("line_b", "1", "2", 0.1, 1.0, 1.2))
    network = Network(("1", "2"), lines)
    gens = (
        Generator("G1", "1", g_max=16, ramp_up=4, ramp_down=4, c_energy=8, c_res_up=2, c_res_down=2),
        Generator("G2", "2", g_max=18, ramp_up=4, ramp_down=4, c_energy=15, c_res_up=2, c_res_down=2),
        Generator("G3", "2", g_max=12, ramp_up=4, ramp_down=4, c_energy=20, c_res_up=2.5, c_res_down=2.5),
    )
    base = np.array([6.0, 15.0, 4.0])
    table = [  # id, outage, absolute scenario loads, probability
        ("S1", True, (6, 15, 4), 0.06),
        ("S2", True, (8, 21, 3), 0.02),
        ("S3", True, (9, 17, 1), 0.02),
        ("S4", False, (8, 21, 3), 0.18),
        ("S5", False, (9, 17, 1), 0.18),
    ]
    scenarios = tuple(Scenario(sid, p, frozenset({"line_b"}) if out else frozenset())
                      for sid, out, _, p in table)
    deltas = {sid: np.array(ld, dtype=float) - base for sid, _, ld, _ in table}
    loads = tuple(
        Load(lid, bus, float(base[i]), 350.0,
             {sid: float(d[i]) for sid, d in deltas.items() if d[i] != 0})
        for i, (lid, bus) in enumerate((("L1", "1"), ("L2", "2"), ("L3", "2"))))
    return MarketCase(network, gens, loads, scenarios, SolveOptions(), name="two_bus")
