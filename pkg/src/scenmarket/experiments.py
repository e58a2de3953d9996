"""Experiment harness: model comparison, fluctuation-settlement volatility
and reserve-price sensitivity.

Random draws use Philox4x64 keyed by the seed; trial ``i`` takes the first
64-bit word of counter block ``i``, so any chunking of trials across workers
reproduces the same sequence.
"""
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .clearing import BASE, clear_cooptimization, clear_traditional, solve_recourse
from .errors import InfeasibleError
from .pricing import compute_prices
from .settlement import congestion_rent, fluctuation_payment

RNG_ALGORITHM = "Philox4x64 (key=seed, counter=trial index)"


def trial_uniforms(seed, n, start=0):
    """Uniforms in [0, 1) for trials ``start .. start + n - 1``."""
    bitgen = np.random.Philox(key=int(seed))
    if start:
        bitgen.advance(int(start))
    raw = bitgen.random_raw(4 * int(n))[::4]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def sample_scenarios(case, n, seed, start=0):
    """I.i.d. realized scenario ids (``"base"`` for the base case)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    labels = np.array((BASE,) + case.scenario_ids, dtype=object)
    cdf = np.cumsum(np.concatenate([[case.base_probability], case.probabilities]))
    idx = np.searchsorted(cdf, trial_uniforms(seed, n, start), side="right")
    return list(labels[np.minimum(idx, len(labels) - 1)])


def _chunks(n, workers):
    size = math.ceil(n / workers)
    return [(a, min(size, n - a)) for a in range(0, n, size)]


def sample_scenarios_parallel(case, n, seed, workers=4):
    """Same draws as ``sample_scenarios``, generated in independent chunks."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(lambda c: sample_scenarios(case, c[1], seed, start=c[0]), _chunks(n, workers))
    return [sid for part in parts for sid in part]


# -------------------------------------------------------------- comparison

@dataclass(frozen=True)
class ComparisonResult:
    fractions: np.ndarray
    requirement: np.ndarray
    base_cost: np.ndarray
    avg_recourse: np.ndarray
    total: np.ndarray
    infeasible_samples: np.ndarray
    status: tuple
    proposed_total: float
    mode: str
    samples: int = 0
    seed: int = None
    rng: str = RNG_ALGORITHM

    def to_dict(self):
        def clean(a):
            return [None if not math.isfinite(v) else float(v) for v in a]
        return {"kind": "comparison_result", "mode": self.mode, "samples": self.samples,
                "seed": self.seed, "rng": self.rng, "proposed_total": self.proposed_total,
                "fractions": clean(self.fractions), "requirement": clean(self.requirement),
                "status": list(self.status), "base_cost": clean(self.base_cost),
                "avg_recourse": clean(self.avg_recourse), "total": clean(self.total),
                "infeasible_samples": self.infeasible_samples.tolist()}

    def to_csv(self, decimals=4):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fraction", "requirement_mw", "status", "base_cost", "avg_recourse",
                    "traditional_total", "proposed_total", "infeasible_samples"])
        fmt = f"{{:.{decimals}f}}"
        for i, f in enumerate(self.fractions):
            w.writerow([fmt.format(f), fmt.format(self.requirement[i]), self.status[i],
                        fmt.format(self.base_cost[i]), fmt.format(self.avg_recourse[i]),
                        fmt.format(self.total[i]), fmt.format(self.proposed_total),
                        int(self.infeasible_samples[i])])
        return buf.getvalue()


def _traditional_point(case, fraction, mode, draws):
    req = fraction * float(case.demand.sum())
    try:
        sol = clear_traditional(case, req, req)
    except InfeasibleError:
        return req, "infeasible", math.nan, math.nan, 0
    # the forecast needs no re-dispatch; solving it anyway would book bid arbitrage
    costs, infeasible = {BASE: 0.0}, {BASE: False}
    for sid in case.scenario_ids:
        res = solve_recourse(case, sid, sol.g, sol.r_up, sol.r_down)
        costs[sid], infeasible[sid] = res.cost, not res.feasible
    if mode == "exact":
        probs = [case.base_probability] + [s.probability for s in case.scenarios]
        recourse = math.fsum(p * costs[sid] for p, sid in zip(probs, (BASE,) + case.scenario_ids))
        bad = sum(1 for sid in infeasible if infeasible[sid])
    else:
        counts = {sid: draws.count(sid) for sid in costs}
        recourse = math.fsum(counts[sid] * costs[sid] for sid in costs) / len(draws)
        bad = sum(counts[sid] for sid in costs if infeasible[sid])
    return req, "optimal", sol.objective, recourse, bad


def compare_models(case, fractions, mode="exact", samples=None, seed=None, workers=1):
    """Traditional clearing over a requirement grid against the co-optimization.

    Each grid point sets both reserve requirements to ``fraction * total
    demand``. ``mode="exact"`` takes the expectation over declared scenarios;
    ``mode="montecarlo"`` averages over ``samples`` draws with ``seed``.
    """
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions < 0):
        raise ValueError("grid fractions must be >= 0")
    if mode not in ("exact", "montecarlo"):
        raise ValueError("mode must be 'exact' or 'montecarlo'")
    draws = None
    if mode == "montecarlo":
        if not samples or samples < 1 or seed is None:
            raise ValueError("montecarlo mode needs samples >= 1 and a seed")
        draws = sample_scenarios(case, samples, seed)
    proposed = clear_cooptimization(case).objective
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        points = list(pool.map(lambda f: _traditional_point(case, f, mode, draws), fractions))
    req, status, base, rec, bad = zip(*points) if points else ((),) * 5
    base, rec = np.array(base, dtype=float), np.array(rec, dtype=float)
    return ComparisonResult(
        fractions=fractions, requirement=np.array(req, dtype=float), base_cost=base,
        avg_recourse=rec, total=base + rec, infeasible_samples=np.array(bad, dtype=int),
        status=tuple(status), proposed_total=proposed, mode=mode,
        samples=int(samples or 0), seed=seed)


def parse_grid(text):
    """``"a:b:step"`` to an inclusive array of fractions."""
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or b < a:
        raise ValueError("grid needs step > 0 and stop >= start")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(count), 12)


# -------------------------------------------------------------- volatility

@dataclass(frozen=True)
class VolatilityResult:
    realized: tuple
    payment_ex_ante: np.ndarray
    payment_ex_post: np.ndarray
    net_ex_ante: np.ndarray
    net_ex_post: np.ndarray
    seed: int
    rng: str = RNG_ALGORITHM

    @property
    def trials(self):
        return len(self.realized)

    @staticmethod
    def running_mean(series):
        return np.cumsum(series) / np.arange(1, len(series) + 1)

    def summary(self):
        out = {"trials": self.trials, "seed": self.seed, "rng": self.rng}
        for name in ("payment_ex_ante", "payment_ex_post", "net_ex_ante", "net_ex_post"):
            x = getattr(self, name)
            mean = math.fsum(x) / len(x)
            std = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
            out[name] = {"mean": mean, "std": std, "stderr": std / math.sqrt(len(x)),
                         "variance": std ** 2}
        return out

    def to_csv(self, decimals=4):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "realized", "payment_ex_ante", "payment_ex_post",
                    "net_ex_ante", "net_ex_post"])
        fmt = f"{{:.{decimals}f}}"
        for i, sid in enumerate(self.realized):
            w.writerow([i, sid, fmt.format(self.payment_ex_ante[i]), fmt.format(self.payment_ex_post[i]),
                        fmt.format(self.net_ex_ante[i] + 0.0), fmt.format(self.net_ex_post[i] + 0.0)])
        return buf.getvalue()


def volatility_study(case, n, seed, solution=None):
    """Per-trial fluctuation payment and operator net revenue under both schemes.

    Operator net revenue of a trial is everything collected from loads minus
    everything paid to generators (including the realized paid-as-bid
    re-dispatch and shedding compensation), net of the expected congestion
    rent, so its expectation is zero.
    """
    if not case.scenarios:
        raise ValueError("volatility study needs at least one scenario")
    solution = solution or clear_cooptimization(case)
    prices = compute_prices(case, solution)
    d = case.demand
    gb = [prices.bus_index(g.bus) for g in case.generators]
    energy_charge = math.fsum(prices.eta_d * d)
    energy_credit = math.fsum((prices.omega_base[gb] + prices.omega_k[:, gb].sum(axis=0)) * solution.g)
    reserve_credit = math.fsum(prices.eta_up * solution.r_up) + math.fsum(prices.eta_down * solution.r_down)
    tau = np.asarray(solution.duals["tau_up"]).reshape(len(case.scenarios), len(case.loads))
    pi = np.array([case.fluctuation(s.id) for s in case.scenarios]).reshape(tau.shape)
    # fully shed loads: the undeliverable fluctuation is refunded at the shedding dual
    shed_refund = math.fsum((tau * pi).ravel())
    rent = congestion_rent(case, solution)[2]
    c_up = np.array([g.c_redisp_up for g in case.generators])
    c_down = np.array([g.c_redisp_down for g in case.generators])
    c_shed = np.array([l.c_shed for l in case.loads])
    realized_cost = {BASE: 0.0}
    for k, sid in enumerate(case.scenario_ids):
        realized_cost[sid] = math.fsum([*(c_up * solution.dg_up[k]), *(-c_down * solution.dg_down[k]),
                                        *(c_shed * solution.dshed[k])])
    ex_ante = fluctuation_payment(case, prices, "ex-ante")
    ex_post = {sid: fluctuation_payment(case, prices, "ex-post", sid) for sid in realized_cost}
    fixed = energy_charge - shed_refund - energy_credit - reserve_credit - rent
    draws = sample_scenarios(case, n, seed)
    pay_post = np.array([ex_post[s] for s in draws])
    paid = np.array([realized_cost[s] for s in draws])
    return VolatilityResult(
        realized=tuple(draws), payment_ex_ante=np.full(n, ex_ante), payment_ex_post=pay_post,
        net_ex_ante=fixed + ex_ante - paid, net_ex_post=fixed + pay_post - paid, seed=seed)


# ------------------------------------------------------------- sensitivity

def sensitivity_sweep(case, generator, parameter, values):
    """Reserve price of ``generator`` as one re-dispatch bid varies.

    ``parameter="c_redisp_up"`` tracks the upward reserve price,
    ``"c_redisp_down"`` the downward one. Returns ``[(value, price), ...]``.
    """
    if parameter not in ("c_redisp_up", "c_redisp_down"):
        raise ValueError("parameter must be c_redisp_up or c_redisp_down")
    j = case.generator_ids.index(generator)
    out = []
    for v in values:
        if not math.isfinite(v):
            raise ValueError("sweep values must be finite")
        swept = case.replace_generator(generator, **{parameter: float(v)})
        prices = compute_prices(swept, clear_cooptimization(swept))
        price = prices.eta_up[j] if parameter == "c_redisp_up" else prices.eta_down[j]
        out.append((float(v), float(price)))
    return out
