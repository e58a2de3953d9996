"""Command-line front end: ``scenmarket <command> CASE [options]``.

Exit codes: 0 success, 1 usage or input error, 2 infeasible model or
violated assumption, 3 a check failed only at a tolerance tighter than the
default, 4 a check failed at the default tolerance.

``CASE`` is a JSON case file or ``builtin:two_bus``. Tables go to standard
output; ``--out`` writes the machine-readable result (``.csv`` or JSON).
The environment variable ``SCENMARKET_TOL`` overrides the default ``verify``
tolerance.
"""
import argparse
import json
import os
import sys

from . import __version__
from .casedef import atomic_write, load_case, save_results
from .clearing import clear_cooptimization, clear_cooptimization_angle, clear_traditional
from .errors import AssumptionViolated, InfeasibleError, ScenMarketError
from .experiments import compare_models, parse_grid, volatility_study
from .pricing import compute_prices
from .settlement import settle
from .verify import THEOREM_TOL, verify_case

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_TOLERANCE, EXIT_DEFECT = 0, 1, 2, 3, 4
TOL_ENV = "SCENMARKET_TOL"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _table(header, rows, fmt="{:>12.4f}"):
    width = max([len(str(h)) for h in header] + [12])
    cells = [" ".join(f"{h:>{width}}" for h in header)]
    for row in rows:
        cells.append(" ".join(fmt.format(v).rjust(width) if isinstance(v, float) else f"{v:>{width}}"
                              for v in row))
    return "\n".join(cells)


def _clear(case, args):
    if args.model == "traditional":
        return clear_traditional(case, args.req_up, args.req_down, dump_lp=args.dump_lp)
    if args.model == "angle":
        return clear_cooptimization_angle(case, dump_lp=args.dump_lp)
    return clear_cooptimization(case, dump_lp=args.dump_lp)


def cmd_clear(args, out):
    if args.model == "traditional" and (args.req_up is None or args.req_down is None):
        raise UsageError("--model traditional needs --req-up and --req-down")
    if args.model != "traditional" and (args.req_up is not None or args.req_down is not None):
        raise UsageError("--req-up/--req-down apply only to --model traditional")
    case = load_case(args.case)
    sol = _clear(case, args)
    print(f"model: {args.model}  objective: {sol.objective:.6f}", file=out)
    rows = [(gid, sol.g[j], sol.r_up[j], sol.r_down[j]) for j, gid in enumerate(sol.generator_ids)]
    print(_table(("generator", "g", "r_up", "r_down"), rows), file=out)
    if args.out:
        save_results(sol, args.out)
    return EXIT_OK


def cmd_price(args, out):
    case = load_case(args.case)
    sol = _clear(case, args)
    prices = compute_prices(case, sol)
    rows = [(gid, prices.eta_g[j], prices.eta_up[j], prices.eta_down[j])
            for j, gid in enumerate(prices.generator_ids)]
    print(_table(("generator", "eta_g", "eta_up", "eta_down"), rows), file=out)
    print(_table(("load", "eta_d"), [(lid, prices.eta_d[l]) for l, lid in enumerate(prices.load_ids)]),
          file=out)
    print(_table(("bus", "omega_base") + prices.scenario_ids,
                 [(bus, prices.omega_base[b], *(float(v) for v in prices.omega_k[:, b]))
                  for b, bus in enumerate(prices.bus_ids)]), file=out)
    for note in prices.notes:
        print(f"note: {note}", file=out)
    if args.out:
        save_results(prices, args.out, decimals=4)
    return EXIT_OK


def cmd_settle(args, out):
    if args.scheme == "ex-post" and args.realized is None:
        raise UsageError("--scheme ex-post needs --realized")
    case = load_case(args.case)
    sol = clear_cooptimization(case)
    prices = compute_prices(case, sol)
    report = settle(case, sol, prices, args.scheme, args.realized)
    out.write(report.to_csv(decimals=1))
    if args.out:
        save_results(report, args.out, decimals=1)
    return EXIT_OK


def _parse_theorems(text):
    try:
        nums = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"--theorems must be a comma list of 1..4, got {text!r}") from None
    if not nums or any(t not in THEOREM_TOL for t in nums):
        raise UsageError(f"--theorems must be a comma list of 1..4, got {text!r}")
    return nums


def _default_tol():
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return None
    try:
        tol = float(raw)
    except ValueError:
        raise UsageError(f"{TOL_ENV} must be a positive number, got {raw!r}") from None
    if not tol > 0:
        raise UsageError(f"{TOL_ENV} must be a positive number, got {raw!r}")
    return tol


def cmd_verify(args, out):
    theorems = _parse_theorems(args.theorems)
    tol = args.tol if args.tol is not None else _default_tol()
    if tol is not None and not tol > 0:
        raise UsageError("--tol must be > 0")
    case = load_case(args.case)
    reports = verify_case(case, theorems, tol=tol)
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        print(f"{rep.name}: {status}  max residual {rep.max_residual:.3e}  tol {rep.tol:.1e}", file=out)
    passed = sum(r.passed for r in reports)
    print(f"{passed}/{len(reports)} pass", file=out)
    if args.out:
        atomic_write(args.out, json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    if passed == len(reports):
        return EXIT_OK
    if tol is not None and all(r.passed for r in verify_case(case, theorems)):
        return EXIT_TOLERANCE
    return EXIT_DEFECT


def _check_samples(args):
    if args.samples is None or args.samples < 1:
        raise UsageError("--samples must be >= 1")
    if args.seed is None:
        raise UsageError("--seed is required")


def cmd_compare(args, out):
    try:
        grid = parse_grid(args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.mode == "mc":
        _check_samples(args)
    case = load_case(args.case)
    mode = "exact" if args.mode == "exact" else "montecarlo"
    res = compare_models(case, grid, mode=mode, samples=args.samples, seed=args.seed,
                         workers=args.workers)
    rows = [(float(f), res.status[i], float(res.base_cost[i]), float(res.avg_recourse[i]),
             float(res.total[i]), res.proposed_total) for i, f in enumerate(res.fractions)]
    print(_table(("fraction", "status", "base_cost", "avg_recourse", "traditional", "proposed"), rows),
          file=out)
    if args.out:
        save_results(res, args.out, decimals=6)
    return EXIT_OK


def cmd_montecarlo(args, out):
    _check_samples(args)
    case = load_case(args.case)
    res = volatility_study(case, args.samples, args.seed)
    summary = res.summary()
    schemes = ("ex-ante", "ex-post") if args.scheme == "both" else (args.scheme,)
    rows = []
    for scheme in schemes:
        key = scheme.replace("-", "_")
        pay, net = summary[f"payment_{key}"], summary[f"net_{key}"]
        rows.append((scheme, pay["mean"], pay["variance"], net["mean"], net["stderr"]))
    print(f"trials: {res.trials}  seed: {res.seed}  rng: {res.rng}", file=out)
    print(_table(("scheme", "payment_mean", "payment_var", "net_mean", "net_stderr"), rows), file=out)
    if args.out:
        if args.out.endswith(".csv"):
            atomic_write(args.out, res.to_csv(decimals=6))
        else:
            atomic_write(args.out, json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="scenmarket", description="Scenario-based energy and reserve market clearing.")
    parser.add_argument("--version", action="version", version=f"scenmarket {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("case", help="case JSON file or builtin:two_bus")
        p.add_argument("--out", help="write the result here (.csv or JSON)")
        p.set_defaults(func=func)
        return p

    for name, func, help_text in (("clear", cmd_clear, "clear the market"),
                                  ("price", cmd_price, "clear and report prices")):
        p = command(name, func, help_text)
        p.add_argument("--model", choices=("coopt", "traditional", "angle"), default="coopt")
        p.add_argument("--req-up", type=float)
        p.add_argument("--req-down", type=float)
        p.add_argument("--dump-lp", help="write the LP in CPLEX LP format")
    sub.choices["price"].set_defaults(func=_price_guard)

    p = command("settle", cmd_settle, "settle the co-optimized market")
    p.add_argument("--scheme", choices=("ex-ante", "ex-post"), default="ex-ante")
    p.add_argument("--realized", help="realized scenario id")

    p = command("verify", cmd_verify, "run the market-property checks")
    p.add_argument("--theorems", default="1,2,3,4")
    p.add_argument("--tol", type=float)

    p = command("compare", cmd_compare, "traditional vs co-optimized expected cost")
    p.add_argument("--grid", default="0:0.4:0.02", help="start:stop:step as fractions of total load")
    p.add_argument("--mode", choices=("exact", "mc"), default="exact")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = command("montecarlo", cmd_montecarlo, "fluctuation-payment volatility study")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=("ex-ante", "ex-post", "both"), default="both")
    return parser


def _price_guard(args, out):
    if args.model == "traditional":
        raise UsageError("price needs a co-optimization model (coopt or angle)")
    return cmd_price(args, out)


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InfeasibleError, AssumptionViolated) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenMarketError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
