"""Independent reference computations used by the tests.

Nothing here imports the package's solver or network code: LPs go to HiGHS
or to brute-force vertex enumeration, shift factors come from the Laplacian
pseudo-inverse, and the two-bus market is rebuilt by hand.
"""
import itertools

import numpy as np
from scipy.optimize import linprog


def highs(lp):
    """Solve a ``LinearProgram`` with HiGHS; returns the scipy result."""
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u)
              for l, u in zip(lp.lb, lp.ub)]
    return linprog(lp.c, A_ub=lp.A_ub if len(lp.b_ub) else None, b_ub=lp.b_ub if len(lp.b_ub) else None,
                   A_eq=lp.A_eq if len(lp.b_eq) else None, b_eq=lp.b_eq if len(lp.b_eq) else None,
                   bounds=bounds, method="highs")


def vertex_minimum(lp, tol=1e-9):
    """Minimum of ``c @ x`` over all basic feasible points, or None if none exist.

    Assumes every variable has finite bounds, so the feasible set is a
    polytope and its minimum is attained at a vertex.
    """
    n = lp.n_vars
    rows, rhs = [], []
    for a, b in zip(lp.A_ub, lp.b_ub):
        rows.append(a), rhs.append(b)
    eye = np.eye(n)
    for j in range(n):
        rows.append(-eye[j]), rhs.append(-lp.lb[j])
        rows.append(eye[j]), rhs.append(lp.ub[j])
    rows, rhs = np.array(rows), np.array(rhs)
    m_eq = len(lp.b_eq)
    planes = np.vstack([lp.A_eq, rows]) if m_eq else rows
    plane_rhs = np.concatenate([lp.b_eq, rhs])
    # a vertex is any feasible point where n independent constraints are tight
    subsets = np.array(list(itertools.combinations(range(len(planes)), n)))
    mats = planes[subsets]
    ok = np.abs(np.linalg.det(mats)) >= 1e-10
    if not ok.any():
        return None
    xs = np.linalg.solve(mats[ok], plane_rhs[subsets[ok]][..., None])[..., 0]
    feasible = np.all(xs @ rows.T <= rhs + tol, axis=1)
    if m_eq:
        feasible &= np.all(np.abs(xs @ lp.A_eq.T - lp.b_eq) <= tol, axis=1)
    if not feasible.any():
        return None
    return float((xs[feasible] @ lp.c).min())

def ptdf_by_pseudoinverse(buses, lines, reference):
    """Shift factors from the pseudo-inverse of the weighted Laplacian.

    ``lines`` holds ``(from, to, reactance)`` tuples. Injection at bus b
    withdrawn at the reference gives angles ``L^+ (e_b - e_ref)``.
    """
    idx = {b: i for i, b in enumerate(buses)}
    n = len(buses)
    lap = np.zeros((n, n))
    for f, t, x in lines:
        i, j = idx[f], idx[t]
        lap[i, i] += 1 / x
        lap[j, j] += 1 / x
        lap[i, j] -= 1 / x
        lap[j, i] -= 1 / x
    pinv = np.linalg.pinv(lap)
    out = np.zeros((len(lines), n))
    for b in range(n):
        inj = np.zeros(n)
        inj[b] += 1
        inj[idx[reference]] -= 1
        theta = pinv @ inj
        for l, (f, t, x) in enumerate(lines):
            out[l, b] = (theta[idx[f]] - theta[idx[t]]) / x
    return out


# Two-bus market written out by hand: G1, L1 at bus 1; G2, G3, L2, L3 at
# bus 2; two equal parallel lines, so each carries half the bus-1 export.
TWO_BUS = {
    "c_g": np.array([8.0, 15.0, 20.0]),
    "c_up": np.array([2.0, 2.0, 2.5]),
    "c_down": np.array([2.0, 2.0, 2.5]),
    "g_max": np.array([16.0, 18.0, 12.0]),
    "ramp": np.array([4.0, 4.0, 4.0]),
    "d": np.array([6.0, 15.0, 4.0]),
    "c_shed": 350.0,
    # probability, second line outaged, scenario loads
    "scenarios": [(0.06, True, (6, 15, 4)), (0.02, True, (8, 21, 3)), (0.02, True, (9, 17, 1)),
                  (0.18, False, (8, 21, 3)), (0.18, False, (9, 17, 1))],
}


def two_bus_highs(c_shed=None):
    """HiGHS solve of the two-bus co-optimization; returns (objective, g, r_up, r_down)."""
    p = TWO_BUS
    c_shed = p["c_shed"] if c_shed is None else c_shed
    n_k = len(p["scenarios"])
    nv = 9 + 9 * n_k
    c = np.zeros(nv)
    c[0:3], c[3:6], c[6:9] = p["c_g"], p["c_up"], p["c_down"]

    def up(k, j):
        return 9 + 9 * k + j

    def down(k, j):
        return 12 + 9 * k + j

    def shed(k, j):
        return 15 + 9 * k + j

    for k, (eps, _, _) in enumerate(p["scenarios"]):
        for j in range(3):
            c[up(k, j)] = eps * p["c_g"][j]
            c[down(k, j)] = -eps * p["c_g"][j]
            c[shed(k, j)] = eps * c_shed
    a_eq, b_eq, a_ub, b_ub = [], [], [], []
    row = np.zeros(nv)
    row[0:3] = 1
    a_eq.append(row), b_eq.append(p["d"].sum())
    for s in (1, -1):
        row = np.zeros(nv)
        row[0] = 0.5 * s
        a_ub.append(row), b_ub.append(1.0 + 0.5 * s * p["d"][0])
    for j in range(3):
        row = np.zeros(nv)
        row[6 + j], row[j] = 1, -1
        a_ub.append(row), b_ub.append(0.0)
        row = np.zeros(nv)
        row[3 + j], row[j] = 1, 1
        a_ub.append(row), b_ub.append(p["g_max"][j])
    bounds = [(0, None)] * 3 + [(0, r) for r in p["ramp"]] * 2
    for k, (eps, outage, loads) in enumerate(p["scenarios"]):
        loads = np.array(loads, dtype=float)
        row = np.zeros(nv)
        row[0:3] = 1
        for j in range(3):
            row[up(k, j)], row[down(k, j)], row[shed(k, j)] = 1, -1, 1
        a_eq.append(row), b_eq.append(loads.sum())
        share = 1.0 if outage else 0.5
        for s in (1, -1):
            row = np.zeros(nv)
            row[0], row[up(k, 0)], row[down(k, 0)], row[shed(k, 0)] = s * share, s * share, -s * share, s * share
            a_ub.append(row), b_ub.append(1.2 + s * share * loads[0])
        for j in range(3):
            row = np.zeros(nv)
            row[up(k, j)], row[3 + j] = 1, -1
            a_ub.append(row), b_ub.append(0.0)
            row = np.zeros(nv)
            row[down(k, j)], row[6 + j] = 1, -1
            a_ub.append(row), b_ub.append(0.0)
        bounds += [(0, None)] * 6 + [(0, v) for v in loads]
    res = linprog(c, A_ub=np.array(a_ub), b_ub=b_ub, A_eq=np.array(a_eq), b_eq=b_eq,
                  bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun, res.x[0:3], res.x[3:6], res.x[6:9]
