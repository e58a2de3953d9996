"""Bounded-variable revised simplex with dual extraction and KKT certificates.

Problem form::

    minimize    c @ x
    subject to  A_eq @ x == b_eq        (duals ``y_eq``: d obj / d b_eq, free sign)
                A_ub @ x <= b_ub        (duals ``mu`` >= 0, Lagrangian term mu (A x - b))
                lb <= x <= ub           (duals ``z_lower``, ``z_upper`` >= 0)

Stationarity reads ``c - A_eq.T y_eq + A_ub.T mu - z_lower + z_upper = 0``.
"""
import enum
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure

_INF = np.inf


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    col_labels: tuple = ()
    eq_labels: tuple = ()
    ub_labels: tuple = ()

    def __post_init__(self):
        n = len(self.c)
        c = np.asarray(self.c, dtype=float)
        a_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        a_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, n)
        for name, value in (("c", c), ("A_eq", self.A_eq), ("b_eq", self.b_eq),
                            ("A_ub", self.A_ub), ("b_ub", self.b_ub)):
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} has non-finite entries")
        lb = np.asarray(self.lb, dtype=float)
        ub = np.asarray(self.ub, dtype=float)
        if np.any(lb > ub):
            raise ValueError("inconsistent bounds: lb > ub")
        if np.any(lb == _INF) or np.any(ub == -_INF):
            raise ValueError("bounds must not be +inf below or -inf above")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_eq", a_eq)
        object.__setattr__(self, "A_ub", a_ub)
        object.__setattr__(self, "b_eq", np.asarray(self.b_eq, dtype=float).reshape(-1))
        object.__setattr__(self, "b_ub", np.asarray(self.b_ub, dtype=float).reshape(-1))
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)
        if not self.col_labels:
            object.__setattr__(self, "col_labels", tuple(f"x{j}" for j in range(n)))
        if not self.eq_labels:
            object.__setattr__(self, "eq_labels", tuple(f"eq{i}" for i in range(len(self.b_eq))))
        if not self.ub_labels:
            object.__setattr__(self, "ub_labels", tuple(f"ub{i}" for i in range(len(self.b_ub))))
        labels = self.col_labels + self.eq_labels + self.ub_labels
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be unique")
        if len(self.col_labels) != n or len(self.eq_labels) != len(self.b_eq) \
                or len(self.ub_labels) != len(self.b_ub):
            raise ValueError("label counts do not match problem dimensions")

    @property
    def n_vars(self):
        return len(self.c)


class LpBuilder:
    """Incremental construction of a labelled ``LinearProgram``."""

    def __init__(self):
        self._cols = {}
        self._cost, self._lb, self._ub = [], [], []
        self._eq, self._ub_rows = [], []

    def add_var(self, label, lb=0.0, ub=_INF, cost=0.0):
        if label in self._cols:
            raise ValueError(f"duplicate variable {label!r}")
        self._cols[label] = len(self._cost)
        self._cost.append(float(cost))
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        return self._cols[label]

    def col(self, label):
        return self._cols[label]

    def add_eq(self, label, coeffs, rhs):
        self._eq.append((label, dict(coeffs), float(rhs)))

    def add_le(self, label, coeffs, rhs):
        self._ub_rows.append((label, dict(coeffs), float(rhs)))

    def build(self):
        n = len(self._cost)

        def dense(rows):
            mat = np.zeros((len(rows), n))
            for i, (_, coeffs, _) in enumerate(rows):
                for lab, v in coeffs.items():
                    mat[i, self._cols[lab]] += v
            return mat

        return LinearProgram(
            c=np.array(self._cost), A_eq=dense(self._eq), b_eq=np.array([r[2] for r in self._eq]),
            A_ub=dense(self._ub_rows), b_ub=np.array([r[2] for r in self._ub_rows]),
            lb=np.array(self._lb), ub=np.array(self._ub),
            col_labels=tuple(self._cols), eq_labels=tuple(r[0] for r in self._eq),
            ub_labels=tuple(r[0] for r in self._ub_rows))


@dataclass(frozen=True)
class LpSolution:
    status: Status
    x: np.ndarray = None
    objective: float = None
    y_eq: np.ndarray = None
    mu: np.ndarray = None
    z_lower: np.ndarray = None
    z_upper: np.ndarray = None
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict, repr=False)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL

    def value(self, label):
        return float(self.x[self.labels["col"][label]])

    def dual(self, label):
        """Row dual (eq: shadow price, ub: mu >= 0) or, for a column label,
        the net bound dual ``z_lower - z_upper`` (the reduced cost)."""
        if label in self.labels["eq"]:
            return float(self.y_eq[self.labels["eq"][label]])
        if label in self.labels["ub"]:
            return float(self.mu[self.labels["ub"][label]])
        j = self.labels["col"][label]
        return float(self.z_lower[j] - self.z_upper[j])


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    refactor_every: int = 64
    bland_after: int = 50
    max_iter: int = None
    scale: bool = True


def _label_maps(lp):
    return {"col": {l: j for j, l in enumerate(lp.col_labels)},
            "eq": {l: i for i, l in enumerate(lp.eq_labels)},
            "ub": {l: i for i, l in enumerate(lp.ub_labels)}}


def _equilibrate(a, passes=8):
    """Geometric-mean row/column scale factors for the nonzeros of ``a``."""
    m, n = a.shape
    r, s = np.ones(m), np.ones(n)
    absa = np.abs(a)
    nz = absa > 0
    if not nz.any():
        return r, s
    logs = np.where(nz, np.log(np.where(nz, absa, 1.0)), 0.0)
    lr, ls = np.zeros(m), np.zeros(n)
    cnt_r = np.maximum(nz.sum(axis=1), 1)
    cnt_c = np.maximum(nz.sum(axis=0), 1)
    for _ in range(passes):
        lr = -((logs + ls[None, :]) * nz).sum(axis=1) / cnt_r
        ls = -((logs + lr[:, None]) * nz).sum(axis=0) / cnt_c
    # powers of two keep the scaling exact in floating point; the clamp
    # stops stray tiny coefficients from dominating a row or column
    r = np.exp2(np.clip(np.round(lr / np.log(2)), -20, 20))
    s = np.exp2(np.clip(np.round(ls / np.log(2)), -20, 20))
    return r, s


def solve(lp, options=None, **overrides):
    """Solve ``lp``; returns an ``LpSolution`` with primal, duals and residuals."""
    opts = options or SolveOptions()
    if overrides:
        opts = SolveOptions(**{**opts.__dict__, **overrides})
    attempts = (True, False) if opts.scale else (False,)
    for i, scale in enumerate(attempts):
        last = i == len(attempts) - 1
        try:
            sol = _solve(lp, opts, scale=scale)
        except NumericalFailure:
            if last:
                raise
            continue
        if not sol.optimal:
            return sol
        res = verify_kkt(lp, sol)
        object.__setattr__(sol, "residuals", res)
        if _certified(lp, res):
            return sol
        if last:
            raise NumericalFailure(f"solution fails KKT certification: {res}")
    raise NumericalFailure("unreachable")


def _certified(lp, res, tol=1e-6):
    rhs = max(1.0, np.abs(lp.b_eq).max(initial=0.0), np.abs(lp.b_ub).max(initial=0.0))
    return (res["primal"] <= tol * rhs and res["stationarity"] <= tol * max(1.0, np.abs(lp.c).max(initial=0.0))
            and res["dual_sign"] <= tol * res["scale"])


def _solve(lp, opts, scale):
    m_e, m_u, n = len(lp.b_eq), len(lp.b_ub), lp.n_vars
    a = np.vstack([lp.A_eq, lp.A_ub]) if m_e + m_u else np.zeros((0, n))
    if scale and a.size:
        r, s = _equilibrate(a)
    else:
        r, s = np.ones(m_e + m_u), np.ones(n)
    a_s = a * r[:, None] * s[None, :]
    b_s = np.concatenate([lp.b_eq, lp.b_ub]) * r
    c_s = lp.c * s
    lb_s, ub_s = lp.lb / s, lp.ub / s

    core = _Simplex(a_s, b_s, c_s, lb_s, ub_s, m_e, opts)
    status = core.run()
    labels = _label_maps(lp)
    if status is not Status.OPTIMAL:
        return LpSolution(status, iterations=core.iterations, labels=labels)

    x = core.x[:n] * s
    y = core.y * r
    d = core.d[:n] / s
    z_lower = np.zeros(n)
    z_upper = np.zeros(n)
    basic = np.zeros(core.n_total, dtype=bool)
    basic[core.basis] = True
    for j in range(n):
        if basic[j]:
            continue
        if core.at_upper[j] or (d[j] < 0 and np.isfinite(lp.ub[j]) and lp.lb[j] == lp.ub[j]):
            z_upper[j] = -d[j]
        else:
            z_lower[j] = d[j]
    # snap values that sit on a bound
    with np.errstate(invalid="ignore"):
        x = np.where(np.isfinite(lp.lb) & (np.abs(x - lp.lb) <= 1e-13 * (1 + np.abs(lp.lb))), lp.lb, x)
        x = np.where(np.isfinite(lp.ub) & (np.abs(x - lp.ub) <= 1e-13 * (1 + np.abs(lp.ub))), lp.ub, x)
    return LpSolution(Status.OPTIMAL, x=x, objective=float(lp.c @ x), y_eq=y[:m_e], mu=-y[m_e:],
                      z_lower=z_lower, z_upper=z_upper, iterations=core.iterations, labels=labels)


class _Simplex:
    """Two-phase bounded revised simplex on ``A x (+ slack) = b``."""

    def __init__(self, a, b, c, lb, ub, m_eq, opts):
        m, n = a.shape
        self.m, self.n, self.opts = m, n, opts
        m_u = m - m_eq
        self.iterations = 0
        # columns: structural | slacks of <= rows | artificials
        start = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
        resid = b - a @ start
        slack_cols = np.zeros((m, m_u))
        slack_cols[m_eq + np.arange(m_u), np.arange(m_u)] = 1.0
        art_rows = [i for i in range(m) if i < m_eq or resid[i] < 0]
        art_cols = np.zeros((m, len(art_rows)))
        for k, i in enumerate(art_rows):
            art_cols[i, k] = 1.0 if resid[i] >= 0 else -1.0
        self.A = np.hstack([a, slack_cols, art_cols])
        self.b = b
        self.n_total = self.A.shape[1]
        n_art = len(art_rows)
        self.lb = np.concatenate([lb, np.zeros(m_u), np.zeros(n_art)])
        self.ub = np.concatenate([ub, np.full(m_u, _INF), np.full(n_art, _INF)])
        self.c_phase2 = np.concatenate([c, np.zeros(m_u + n_art)])
        self.art = np.arange(n + m_u, self.n_total)

        self.x = np.concatenate([start, np.zeros(m_u), np.zeros(n_art)])
        self.at_upper = np.zeros(self.n_total, dtype=bool)
        self.at_upper[:n] = ~np.isfinite(lb) & np.isfinite(ub)
        basis = []
        art_of_row = dict(zip(art_rows, range(n_art)))
        for i in range(m):
            if i in art_of_row:
                col = n + m_u + art_of_row[i]
                self.x[col] = abs(resid[i])
            else:
                col = n + (i - m_eq)
                self.x[col] = resid[i]
            basis.append(col)
        self.basis = np.array(basis, dtype=int)
        self.B_inv = np.diag([self.A[i, self.basis[i]] for i in range(m)]).astype(float)
        self.max_iter = opts.max_iter or 50 * (m + self.n_total) + 1000
        self.y = np.zeros(m)
        self.d = np.zeros(self.n_total)

    # -- linear algebra -------------------------------------------------
    def _refactor(self):
        bmat = self.A[:, self.basis]
        try:
            self.B_inv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis during refactorization") from exc
        if not np.all(np.isfinite(self.B_inv)):
            raise NumericalFailure("non-finite basis inverse")
        nonbasic = np.ones(self.n_total, dtype=bool)
        nonbasic[self.basis] = False
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.B_inv @ rhs

    # -- main loop --------------------------------------------------------
    def run(self):
        if len(self.art):
            cost1 = np.zeros(self.n_total)
            cost1[self.art] = 1.0
            status = self._iterate(cost1)
            if status is not Status.OPTIMAL:
                raise NumericalFailure("phase 1 did not converge")
            infeas = self.x[self.art].sum()
            if infeas > self.opts.feas_tol * max(1.0, np.abs(self.b).max(initial=0.0)):
                return Status.INFEASIBLE
            # artificials are pinned to zero for phase 2
            self.ub[self.art] = 0.0
            self.x[self.art] = np.where(np.isin(self.art, self.basis), self.x[self.art], 0.0)
            self.at_upper[self.art] = False
        return self._iterate(self.c_phase2)

    def _iterate(self, cost):
        opts = self.opts
        degenerate = 0
        bland = False
        since_refactor = 0
        self._refactor()
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure(f"iteration limit {self.max_iter} reached")
            y = self.B_inv.T @ cost[self.basis]
            d = cost - self.A.T @ y
            d[self.basis] = 0.0
            q = self._entering(d, bland)
            if q is None:
                # confirm optimality on a fresh factorization
                if since_refactor:
                    self._refactor()
                    since_refactor = 0
                    y = self.B_inv.T @ cost[self.basis]
                    d = cost - self.A.T @ y
                    d[self.basis] = 0.0
                    if self._entering(d, bland) is not None:
                        continue
                self.y, self.d = y, d
                return Status.OPTIMAL
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.B_inv @ self.A[:, q]
            step, leave, to_upper = self._ratio(q, alpha, direction, bland)
            if step is None:
                self.y, self.d = y, d
                return Status.UNBOUNDED
            self.iterations += 1
            self.x[self.basis] -= direction * step * alpha
            self.x[q] += direction * step
            if leave is None:
                self.at_upper[q] = not self.at_upper[q]
            else:
                out = self.basis[leave]
                self.x[out] = self.ub[out] if to_upper else self.lb[out]
                self.at_upper[out] = to_upper
                self.at_upper[q] = False
                self.basis[leave] = q
                piv = alpha[leave]
                row = self.B_inv[leave] / piv
                self.B_inv -= np.outer(alpha, row)
                self.B_inv[leave] = row
                since_refactor += 1
                if since_refactor >= opts.refactor_every:
                    self._refactor()
                    since_refactor = 0
            if step <= 1e-12:
                degenerate += 1
                if degenerate > opts.bland_after:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def _entering(self, d, bland):
        tol = self.opts.opt_tol
        fixed = self.lb == self.ub
        free = ~np.isfinite(self.lb) & ~np.isfinite(self.ub)
        improve_up = (d < -tol) & ~self.at_upper & ~fixed
        improve_down = (d > tol) & (self.at_upper | free) & ~fixed
        eligible = improve_up | improve_down
        eligible[self.basis] = False
        idx = np.flatnonzero(eligible)
        if idx.size == 0:
            return None
        if bland:
            return int(idx[0])
        return int(idx[np.argmax(np.abs(d[idx]))])

    def _ratio(self, q, alpha, direction, bland):
        ptol = self.opts.pivot_tol
        xb = self.x[self.basis]
        lb = self.lb[self.basis]
        ub = self.ub[self.basis]
        change = -direction * alpha  # rate of change of x_B per unit step
        best = _INF
        if np.isfinite(self.ub[q]) and np.isfinite(self.lb[q]):
            best = self.ub[q] - self.lb[q]
        leave, to_upper = None, False
        ratios = np.full(self.m, _INF)
        dec = change < -ptol
        inc = change > ptol
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios[dec] = (xb[dec] - lb[dec]) / -change[dec]
            ratios[inc] = (ub[inc] - xb[inc]) / change[inc]
        ratios = np.where(np.isnan(ratios), _INF, np.maximum(ratios, 0.0))
        tmin = ratios.min(initial=_INF)
        if tmin < best or (tmin == best and np.isfinite(tmin)):
            cand = np.flatnonzero(ratios <= tmin + 1e-12 * max(1.0, tmin))
            if bland:
                r = int(cand[np.argmin(self.basis[cand])])
            else:
                r = int(cand[np.argmax(np.abs(alpha[cand]))])
            best = ratios[r]
            leave, to_upper = r, bool(inc[r])
        if not np.isfinite(best):
            return None, None, False
        return best, leave, to_upper


def verify_kkt(lp, sol):
    """Max residual per KKT family, all in unscaled units.

    Keys: ``primal``, ``stationarity``, ``dual_sign``, ``complementarity``,
    ``gap`` (absolute primal-dual objective difference) and ``scale``
    (``max(1, |objective|)``).
    """
    x, y, mu, zl, zu = sol.x, sol.y_eq, sol.mu, sol.z_lower, sol.z_upper
    r_eq = lp.A_eq @ x - lp.b_eq
    slack = lp.b_ub - lp.A_ub @ x
    primal = max(np.abs(r_eq).max(initial=0.0), (-slack).max(initial=0.0),
                 (lp.lb - x).max(initial=0.0), (x - lp.ub).max(initial=0.0))
    grad = lp.c - lp.A_eq.T @ y + lp.A_ub.T @ mu - zl + zu
    dual_sign = max((-mu).max(initial=0.0), (-zl).max(initial=0.0), (-zu).max(initial=0.0), 0.0)
    fin_l, fin_u = np.isfinite(lp.lb), np.isfinite(lp.ub)
    cs = [np.abs(mu * slack).max(initial=0.0)]
    cs.append(np.abs(np.where(fin_l, zl * (x - np.where(fin_l, lp.lb, 0.0)), zl)).max(initial=0.0))
    cs.append(np.abs(np.where(fin_u, zu * (np.where(fin_u, lp.ub, 0.0) - x), zu)).max(initial=0.0))
    dual_obj = (lp.b_eq @ y - lp.b_ub @ mu + np.where(fin_l, zl * np.where(fin_l, lp.lb, 0.0), 0.0).sum()
                - np.where(fin_u, zu * np.where(fin_u, lp.ub, 0.0), 0.0).sum())
    primal_obj = float(lp.c @ x)
    return {
        "primal": float(primal),
        "stationarity": float(np.abs(grad).max(initial=0.0)),
        "dual_sign": float(dual_sign),
        "complementarity": float(max(cs)),
        "gap": float(abs(primal_obj - dual_obj)),
        "scale": float(max(1.0, abs(primal_obj))),
    }


_NAME_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _lp_name(label, prefix):
    return f"{prefix}_{_NAME_BAD.sub('_', label)}"


def _fmt(v):
    return repr(float(v))


def to_lp_text(lp):
    """Render ``lp`` in the CPLEX LP text format (for external cross-checks)."""
    cols = [_lp_name(l, "x") for l in lp.col_labels]
    if len(set(cols)) != len(cols):
        cols = [f"x{j}" for j in range(lp.n_vars)]

    def expr(row):
        terms = [f"{'-' if v < 0 else '+'} {_fmt(abs(v))} {cols[j]}" for j, v in enumerate(row) if v != 0]
        return " ".join(terms) if terms else f"0 {cols[0]}"

    out = ["\\ generated by scenmarket.lpcore", "Minimize", f" obj: {expr(lp.c)}", "Subject To"]
    for i, lab in enumerate(lp.eq_labels):
        out.append(f" {_lp_name(lab, 'e')}_{i}: {expr(lp.A_eq[i])} = {_fmt(lp.b_eq[i])}")
    for i, lab in enumerate(lp.ub_labels):
        out.append(f" {_lp_name(lab, 'u')}_{i}: {expr(lp.A_ub[i])} <= {_fmt(lp.b_ub[i])}")
    out.append("Bounds")
    for j, name in enumerate(cols):
        lo, hi = lp.lb[j], lp.ub[j]
        if not np.isfinite(lo) and not np.isfinite(hi):
            out.append(f" {name} free")
        elif not np.isfinite(hi):
            out.append(f" {name} >= {_fmt(lo)}" if lo != 0 else f" {name} >= 0")
        elif not np.isfinite(lo):
            out.append(f" -inf <= {name} <= {_fmt(hi)}")
        else:
            out.append(f" {_fmt(lo)} <= {name} <= {_fmt(hi)}")
    out.append("End")
    return "\n".join(out) + "\n"
