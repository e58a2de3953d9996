"""DC network model: shift factors, post-outage shift factors, angle form.

All matrices are dense; buses are ordered as declared in ``Network.buses``.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedNetwork, UnknownBus, UnknownLine, ValidationError


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    reactance: float = 0.1
    capacity_base: float = 1.0
    capacity_scenario: float = 1.0

    def __post_init__(self):
        for name in ("reactance", "capacity_base", "capacity_scenario"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"lines[{self.id}].{name}", f"must be > 0, got {value}")
        if self.from_bus == self.to_bus:
            raise ValidationError(f"lines[{self.id}]", "line endpoints must differ")


@dataclass(frozen=True)
class Network:
    buses: tuple
    lines: tuple
    reference_bus: str = None
    _bus_index: dict = field(init=False, repr=False, compare=False)
    _line_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        buses = tuple(str(b) for b in self.buses)
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", tuple(self.lines))
        if not buses:
            raise ValidationError("buses", "network needs at least one bus")
        if len(set(buses)) != len(buses):
            raise ValidationError("buses", "bus ids must be unique")
        object.__setattr__(self, "_bus_index", {b: i for i, b in enumerate(buses)})
        line_ids = [ln.id for ln in self.lines]
        if len(set(line_ids)) != len(line_ids):
            raise ValidationError("lines", "line ids must be unique")
        object.__setattr__(self, "_line_index", {lid: i for i, lid in enumerate(line_ids)})
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in self._bus_index:
                    raise ValidationError(f"lines[{ln.id}]", f"unknown bus {end!r}")
        if self.reference_bus is None:
            object.__setattr__(self, "reference_bus", min(buses, key=_bus_sort_key))
        elif str(self.reference_bus) not in self._bus_index:
            raise ValidationError("reference_bus", f"unknown bus {self.reference_bus!r}")
        else:
            object.__setattr__(self, "reference_bus", str(self.reference_bus))
        if not is_connected(self, ()):
            raise ValidationError("lines", "base-case network is not connected")

    @property
    def n_buses(self):
        return len(self.buses)

    def bus_index(self, bus):
        try:
            return self._bus_index[str(bus)]
        except KeyError:
            raise UnknownBus(bus) from None

    def line_index(self, line_id):
        try:
            return self._line_index[line_id]
        except KeyError:
            raise UnknownLine(line_id) from None

    def surviving_lines(self, outaged_line_ids=()):
        outaged = set(outaged_line_ids)
        for lid in outaged:
            self.line_index(lid)
        return tuple(ln for ln in self.lines if ln.id not in outaged)

    def with_reference(self, bus):
        return Network(self.buses, self.lines, reference_bus=bus)


def _bus_sort_key(bus):
    # numeric ids sort numerically, everything else lexically after them
    try:
        return (0, float(bus), "")
    except ValueError:
        return (1, 0.0, bus)


def _incidence(network, lines):
    inc = np.zeros((len(lines), network.n_buses))
    for i, ln in enumerate(lines):
        inc[i, network.bus_index(ln.from_bus)] = 1.0
        inc[i, network.bus_index(ln.to_bus)] = -1.0
    return inc


def is_connected(network, outaged_line_ids):
    lines = [ln for ln in network.lines if ln.id not in set(outaged_line_ids)]
    n = network.n_buses
    if n == 1:
        return True
    rows = [network.bus_index(ln.from_bus) for ln in lines]
    cols = [network.bus_index(ln.to_bus) for ln in lines]
    adj = csr_matrix((np.ones(len(lines)), (rows, cols)), shape=(n, n))
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


def _check_outage(network, outaged_line_ids):
    outaged = tuple(outaged_line_ids)
    for lid in outaged:
        network.line_index(lid)
    if not is_connected(network, outaged):
        raise DisconnectedNetwork(f"outage of {sorted(outaged)} islands the network")
    return network.surviving_lines(outaged)


def compute_ptdf(network, outaged_line_ids=()):
    """Shift factors of surviving lines w.r.t. bus injections.

    Entry ``(l, b)`` is the MW flow on surviving line ``l`` (from -> to) for
    1 MW injected at bus ``b`` and withdrawn at the reference bus.
    """
    lines = _check_outage(network, outaged_line_ids)
    n = network.n_buses
    ptdf = np.zeros((len(lines), n))
    if n == 1 or not lines:
        return ptdf
    inc = _incidence(network, lines)
    susceptance = np.array([1.0 / ln.reactance for ln in lines])
    bflow = susceptance[:, None] * inc
    bbus = inc.T @ bflow
    keep = np.array([i for i in range(n) if i != network.bus_index(network.reference_bus)])
    # B_r theta_r = p_r ; flows = Bf_r theta_r = Bf_r B_r^{-1}
    ptdf[:, keep] = np.linalg.solve(bbus[np.ix_(keep, keep)].T, bflow[:, keep].T).T
    # round-off residue would otherwise distort LP scaling
    ptdf[np.abs(ptdf) < 1e-12] = 0.0
    return ptdf


def build_angle_system(network, outaged_line_ids=(), gen_buses=(), load_buses=()):
    """Matrices of the angle-based DC model.

    Returns ``(B, F, A_G, A_D)`` with nodal injections ``B @ theta`` and
    surviving-line flows ``F @ theta``; ``A_G``/``A_D`` map generators and
    loads to buses.
    """
    lines = _check_outage(network, outaged_line_ids)
    inc = _incidence(network, lines)
    susceptance = np.array([1.0 / ln.reactance for ln in lines])
    flow = susceptance[:, None] * inc
    bbus = inc.T @ flow
    a_g = np.zeros((network.n_buses, len(gen_buses)))
    for j, bus in enumerate(gen_buses):
        a_g[network.bus_index(bus), j] = 1.0
    a_d = np.zeros((network.n_buses, len(load_buses)))
    for l, bus in enumerate(load_buses):
        a_d[network.bus_index(bus), l] = 1.0
    return bbus, flow, a_g, a_d


@dataclass(frozen=True)
class PtdfSet:
    base: np.ndarray
    base_lines: tuple
    per_scenario: dict
    surviving_lines: dict

    @classmethod
    def build(cls, network, scenario_outages):
        """``scenario_outages`` maps scenario id -> iterable of outaged line ids."""
        base = compute_ptdf(network)
        per_scenario, surviving = {}, {}
        for sid, outaged in scenario_outages.items():
            per_scenario[sid] = compute_ptdf(network, outaged)
            surviving[sid] = tuple(ln.id for ln in network.surviving_lines(outaged))
        return cls(base, tuple(ln.id for ln in network.lines), per_scenario, surviving)
