"""Command-line entry point: ``rsced solve|price|sweep|bench|validate``.

Exit codes
----------
0 success, 1 usage / parse / validation error, 2 infeasible, 3 unbounded,
4 iteration limit, 5 any other solver failure (numerical trouble, cycling,
method disagreement, a theorem violation).

JSON reports are written with sorted keys. Wall-clock numbers live under a
separate ``timing`` key so two runs with the same inputs differ only there.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .benders import benders_solve, decompose
from .cases import (BUNDLED, CaseFile, load_case, synthetic_case)
from .errors import (InfeasibleProblem, InvalidAlpha, IslandedNetwork, IterationLimit,
                     ObjectiveMismatch, ParseError, RscedError, UnboundedProblem,
                     ValidationError)
from .model import DispatchSolution, Variant, build, solve_dispatch
from .pricing import nlmp, settle, slmp, theorem_audit

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNBOUNDED, EXIT_ITERATION, EXIT_SOLVER = range(6)
BENCH_RTOL = 1e-4


def exit_code(exc: BaseException) -> int:
    """Map an exception onto the documented exit-code table."""
    if isinstance(exc, InfeasibleProblem):
        return EXIT_INFEASIBLE
    if isinstance(exc, UnboundedProblem):
        return EXIT_UNBOUNDED
    if isinstance(exc, IterationLimit):
        return EXIT_ITERATION
    if isinstance(exc, (ParseError, ValidationError, InvalidAlpha, IslandedNetwork,
                        FileNotFoundError, ValueError)):
        return EXIT_USAGE
    # NumericalFailure, CyclingDetected, ObjectiveMismatch, TheoremViolation, ...
    return EXIT_SOLVER


# --------------------------------------------------------------------------- helpers
def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _num(v):
    """JSON-friendly scalar; non-finite floats become strings."""
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _vec(a) -> list:
    return [_num(v) for v in np.asarray(a, dtype=float).ravel()]


def _load(args) -> CaseFile:
    if getattr(args, "synthetic", None):
        case = synthetic_case(args.synthetic, seed=args.seed)
    else:
        case = load_case(args.case)
    changes = {}
    for key in ("variant", "alpha", "method", "pricing", "psced_limit"):
        value = getattr(args, key, None)
        if value is not None and not isinstance(value, list):
            changes[key] = value
    if getattr(args, "tol", None) is not None:
        changes["tolerance"] = args.tol
    return case.with_solve(**changes) if changes else case


def _shed_stats(sol: DispatchSolution) -> dict:
    per_k = sol.dd.sum(axis=1) if sol.dd.size else np.zeros(0)
    return {
        "total": _num(per_k.sum()) if per_k.size else 0.0,
        "average": _num(per_k.mean()) if per_k.size else 0.0,
        "max": _num(per_k.max()) if per_k.size else 0.0,
        "per_scenario": _vec(per_k),
    }


# --------------------------------------------------------------------------- solving
def run_case(case: CaseFile, engine: str | None = None, timing: dict | None = None):
    """Solve ``case`` per its solve_config; returns (solution, benders result or None, warnings)."""
    cfg = case.solve_config
    timing = timing if timing is not None else {}
    net = case.network()
    variant = Variant(cfg.variant)
    scen = None if variant is Variant.ED else case.scenarios(net)
    warnings = list(scen.warnings) if scen is not None else []
    t0 = time.perf_counter()
    lp, index = build(variant, net, scen, cfg.alpha, cfg.psced_limit)
    timing["build_s"] = time.perf_counter() - t0
    bres = None
    if cfg.method == "benders":
        if variant is not Variant.RSCED:
            raise ValueError("--method benders needs --variant rsced")
        t0 = time.perf_counter()
        bres = benders_solve(decompose(lp, index), tol=min(cfg.tolerance, 1e-6), engine=engine)
        timing["benders_s"] = time.perf_counter() - t0
        if bres.trace.cut_violations:
            warnings.append(f"{bres.trace.cut_violations} cut(s) overestimated a subproblem value")
        sol = bres.solution
        if cfg.pricing != "none":
            # cuts do not carry the full multiplier set, so pricing re-solves monolithically
            t0 = time.perf_counter()
            sol = solve_dispatch(lp, index, engine, cfg.tolerance)
            timing["pricing_resolve_s"] = time.perf_counter() - t0
            gap = abs(sol.objective - bres.objective) / (1.0 + abs(sol.objective))
            if gap > BENCH_RTOL:
                raise ObjectiveMismatch(f"Benders objective {bres.objective:.10g} differs from "
                                        f"monolithic {sol.objective:.10g}")
    else:
        t0 = time.perf_counter()
        sol = solve_dispatch(lp, index, engine, cfg.tolerance)
        timing["solve_s"] = time.perf_counter() - t0
    if sol.kkt is not None and not sol.kkt.ok(cfg.tolerance):
        warnings.append(f"KKT residual {sol.kkt.worst:.3g} above tolerance {cfg.tolerance:g}")
    return sol, bres, warnings


def _settlement_block(sol: DispatchSolution, scheme: str, tol: float) -> dict:
    prices = nlmp(sol) if scheme == "nlmp" else slmp(sol)
    rep = settle(sol, prices, tol)
    return {
        "prices": _vec(prices.values),
        "demand_payments": _vec(rep.demand_payments),
        "energy_payments": _vec(rep.energy_payments),
        "reserve_payments": _vec(rep.reserve_payments),
        "loc": _vec(rep.loc),
        "merchandising_surplus": _num(rep.ms),
        "total_loc": _num(rep.total_loc),
        "total_revenue": _num(rep.total_revenue),
        "flags": dict(rep.theorem_flags),
    }


def _schemes(pricing: str) -> tuple[str, ...]:
    return {"nlmp": ("nlmp",), "slmp": ("slmp",), "both": ("nlmp", "slmp"), "none": ()}[pricing]


def build_report(case: CaseFile, sol: DispatchSolution, bres=None, warnings=(),
                 timing: dict | None = None) -> dict:
    cfg = case.solve_config
    report = {
        "report_version": REPORT_VERSION,
        "rsced_version": __version__,
        "case": case.name,
        "solve_config": asdict(cfg),
        "dispatch": {
            "objective": _num(sol.objective),
            "g": _vec(sol.g),
            "r_up": _vec(sol.r_hi),
            "r_down": _vec(sol.r_lo),
            "nominal_cost": _num(sol.nominal_cost),
            "reserve_cost": _num(sol.reserve_cost),
            "cvar_term": _num(sol.cvar_term),
            "var_anchor": _num(sol.z),
            "scenario_cost": _vec(sol.y),
            "shed": _shed_stats(sol),
        },
        "warnings": list(warnings),
        "timing": {k: round(v, 6) for k, v in sorted((timing or {}).items())},
    }
    if sol.kkt is not None:
        report["kkt"] = {
            "primal": _num(sol.kkt.max_primal_residual),
            "dual": _num(sol.kkt.max_dual_residual),
            "complementarity": _num(sol.kkt.max_complementarity_residual),
            "stationarity": _num(sol.kkt.max_stationarity_residual),
            "duality_gap": _num(sol.kkt.duality_gap),
        }
    if bres is not None:
        report["benders"] = {
            "objective": _num(bres.objective),
            "iterations": len(bres.trace.rows),
            "reason": bres.trace.reason,
            "lower_bounds": _vec(bres.trace.lower_bounds),
            "upper_bounds": _vec([r.upper_bound for r in bres.trace.rows]),
            "cut_violations": bres.trace.cut_violations,
        }
        report["timing"]["benders_iterations_ms"] = [round(r.millis, 3) for r in bres.trace.rows]
    schemes = _schemes(cfg.pricing) if sol.has_duals else ()
    if schemes:
        report["settlement"] = {s: _settlement_block(sol, s, cfg.tolerance) for s in schemes}
        if sol.variant in (Variant.RSCED, Variant.CSCED):
            audit = theorem_audit(sol, cfg.tolerance)
            report["audit"] = {"flags": dict(audit.flags), "findings": list(audit.findings)}
    return report


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _table(report: dict) -> str:
    d = report["dispatch"]
    cfg = report["solve_config"]
    lines = [f"case {report['case']}  variant {cfg['variant']}  alpha {cfg['alpha']:g}  "
             f"method {cfg['method']}"]
    lines.append("bus        g      r_up    r_down")
    for i, (g, ru, rd) in enumerate(zip(d["g"], d["r_up"], d["r_down"])):
        lines.append(f"{i:>3} {g:>9.3f} {ru:>9.3f} {rd:>9.3f}")
    lines.append(f"objective      {d['objective']:.4f} $/h")
    lines.append(f"nominal cost   {d['nominal_cost']:.4f} $/h")
    lines.append(f"reserve cost   {d['reserve_cost']:.4f} $/h")
    lines.append(f"CVaR term      {d['cvar_term']:.4f} $/h")
    lines.append(f"shed total     {d['shed']['total']:.4f} MW  (avg {d['shed']['average']:.4f}, "
                 f"max {d['shed']['max']:.4f})")
    for scheme, block in report.get("settlement", {}).items():
        prices = " ".join(f"{p:.4f}" for p in block["prices"])
        lines.append(f"{scheme.upper():<5} prices [{prices}]  MS {block['merchandising_surplus']:.4f}  "
                     f"LOC {block['total_loc']:.4f}  revenue {block['total_revenue']:.4f}")
    if "benders" in report:
        b = report["benders"]
        lines.append(f"benders: {b['iterations']} iterations ({b['reason']})")
    if "kkt" in report:
        lines.append(f"max KKT residual {max(report['kkt'][k] for k in ('primal', 'dual', 'complementarity', 'stationarity')):.3g}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def _flat(report: dict) -> list[tuple[str, object]]:
    out = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        elif isinstance(obj, list):
            for i, v in enumerate(obj):
                walk(f"{prefix}[{i}]", v)
        else:
            out.append((prefix, obj))

    walk("", {k: v for k, v in report.items() if k != "timing"})
    return out


def _csv_rows(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()


def _emit(text: str, path: str | None = None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- commands
def cmd_solve(args) -> int:
    case = _load(args)
    timing: dict = {}
    sol, bres, warnings = run_case(case, args.engine, timing)
    report = build_report(case, sol, bres, warnings, timing)
    if args.out:
        _emit(dumps_report(report), args.out)
    if args.format == "json":
        _emit(dumps_report(report))
    elif args.format == "csv":
        _emit(_csv_rows([{"key": k, "value": v} for k, v in _flat(report)], ["key", "value"]))
    else:
        _emit(_table(report))
    return EXIT_OK


def cmd_price(args) -> int:
    if args.pricing in (None, "none"):
        args.pricing = "both"
    return cmd_solve(args)


SWEEP_COLUMNS = ["index", "axis", "value", "alpha", "probability", "status", "objective",
                 "nominal_cost", "reserve_cost", "cvar", "shed_total", "shed_avg", "shed_max",
                 "ms_nlmp", "loc_nlmp", "revenue_nlmp", "ms_slmp", "loc_slmp", "revenue_slmp",
                 "error"]


def _target_contingency(case: CaseFile, scen, target: str) -> int:
    """Index of the single-line contingency named by a line id or a ``from-to`` bus pair."""
    lines = case.lines
    pos = None
    if "-" in target:
        a, b = (int(v) for v in target.split("-", 1))
        bus_ids = [bus.id for bus in case.buses]
        ia, ib = bus_ids.index(a), bus_ids.index(b)
        for i, ln in enumerate(lines):
            if {ln.from_bus, ln.to_bus} == {ia, ib}:
                pos = i
    else:
        ids = [ln.id for ln in lines]
        if int(target) in ids:
            pos = ids.index(int(target))
    if pos is None:
        raise ValueError(f"no line matches target {target!r}")
    for k, con in enumerate(scen.contingencies):
        if con.removed_lines == frozenset({pos}):
            return k
    raise ValueError(f"no contingency removes exactly line {target!r}")


def sweep_point(case: CaseFile, alpha: float, k: int | None, p: float | None,
                engine: str | None = None) -> dict:
    """One sweep row; solver failures are reported in-row rather than raised."""
    row = {"alpha": alpha, "probability": p, "status": "ok", "error": None}
    try:
        net = case.network()
        scen = case.scenarios(net)
        if k is not None:
            scen = scen.with_probability(k, p)
        lp, index = build(Variant.RSCED, net, scen, alpha)
        sol = solve_dispatch(lp, index, engine, case.solve_config.tolerance)
        shed = _shed_stats(sol)
        row.update(objective=sol.objective, nominal_cost=sol.nominal_cost,
                   reserve_cost=sol.reserve_cost, cvar=sol.cvar_term,
                   shed_total=shed["total"], shed_avg=shed["average"], shed_max=shed["max"])
        if case.solve_config.pricing != "none":
            for scheme, fn in (("nlmp", nlmp), ("slmp", slmp)):
                rep = settle(sol, fn(sol), case.solve_config.tolerance)
                row[f"ms_{scheme}"] = rep.ms
                row[f"loc_{scheme}"] = rep.total_loc
                row[f"revenue_{scheme}"] = rep.total_revenue
    except RscedError as exc:
        row["status"] = type(exc).__name__
        row["error"] = str(exc)
    return row


def _workers(n: int) -> int:
    env = os.environ.get("RSCED_THREADS")
    cap = int(env) if env else min(os.cpu_count() or 1, 8)
    return max(1, min(cap, n))


def run_sweep(case: CaseFile, axis: str, grid, alphas=None, target: str | None = None,
              engine: str | None = None) -> list[dict]:
    if not grid:
        raise ValueError("sweep grid is empty")
    if axis == "alpha":
        for a in grid:
            if not 0.0 <= a < 1.0:
                raise ValueError(f"alpha grid value {a} outside [0, 1)")
        points = [(a, None, None, a) for a in grid]
    elif axis == "probability":
        if target is None:
            raise ValueError("probability sweeps need --target")
        for p in grid:
            if not 0.0 <= p < 1.0:
                raise ValueError(f"probability grid value {p} outside [0, 1)")
        k = _target_contingency(case, case.scenarios(), target)
        alphas = alphas or [case.solve_config.alpha]
        points = [(a, k, p, p) for a in alphas for p in grid]
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")

    def run(item):
        a, k, p, value = item
        row = sweep_point(case, a, k, p, engine)
        row.update(axis=axis, value=value)
        return row

    with ThreadPoolExecutor(max_workers=_workers(len(points))) as pool:
        rows = list(pool.map(run, points))
    for i, row in enumerate(rows):
        row["index"] = i
    return rows


def cmd_sweep(args) -> int:
    case = _load(args)
    grid = args.grid
    if grid is None:
        grid = [round(0.1 * i, 10) for i in range(10)] if args.axis == "alpha" else \
            [round(0.02 * i, 10) for i in range(11)]
    rows = run_sweep(case, args.axis, grid, args.alphas, args.target, args.engine)
    if args.format == "json" or args.out:
        text = json.dumps({"report_version": REPORT_VERSION, "case": case.name,
                           "axis": args.axis, "rows": rows}, sort_keys=True, indent=2) + "\n"
        if args.out:
            _emit(text, args.out)
        if args.format == "json":
            _emit(text)
    if args.format == "csv":
        _emit(_csv_rows(rows, SWEEP_COLUMNS))
    elif args.format == "table":
        cols = ["value", "alpha", "status", "nominal_cost", "reserve_cost", "cvar", "shed_total",
                "ms_nlmp", "ms_slmp", "loc_nlmp", "loc_slmp"]
        out = [" ".join(f"{c:>12}" for c in cols)]
        for row in rows:
            cells = []
            for c in cols:
                v = row.get(c)
                cells.append(f"{v:>12.4f}" if isinstance(v, float) else f"{str(v):>12}")
            out.append(" ".join(cells))
        _emit("\n".join(out) + "\n")
    return EXIT_OK


def run_bench(case: CaseFile, methods, alphas, engine: str | None = None) -> list[dict]:
    rows = []
    for a in alphas:
        objs = {}
        for method in methods:
            c = case.with_solve(variant="rsced", alpha=a, method=method, pricing="none")
            t0 = time.perf_counter()
            sol, bres, _ = run_case(c, engine)
            wall = time.perf_counter() - t0
            objs[method] = sol.objective
            rows.append({"alpha": a, "method": method, "objective": sol.objective,
                         "iterations": len(bres.trace.rows) if bres else None,
                         "wall_s": wall})
        if len(objs) > 1:
            ref = objs.get("monolithic", next(iter(objs.values())))
            for method, obj in objs.items():
                if abs(obj - ref) / (1.0 + abs(ref)) > BENCH_RTOL:
                    raise ObjectiveMismatch(f"alpha {a}: {method} objective {obj:.10g} vs {ref:.10g}")
    return rows


def cmd_bench(args) -> int:
    case = _load(args)
    alphas = args.alphas or [case.solve_config.alpha]
    rows = run_bench(case, args.methods, alphas, args.engine)
    if args.format == "json" or args.out:
        text = json.dumps({"report_version": REPORT_VERSION, "case": case.name,
                           "rows": [{k: v for k, v in r.items() if k != "wall_s"} for r in rows],
                           "timing": [r["wall_s"] for r in rows]}, sort_keys=True, indent=2) + "\n"
        if args.out:
            _emit(text, args.out)
        if args.format == "json":
            _emit(text)
    if args.format == "csv":
        _emit(_csv_rows(rows, ["alpha", "method", "objective", "iterations", "wall_s"]))
    elif args.format == "table":
        out = [f"{'alpha':>6} {'method':>11} {'objective':>16} {'iters':>6} {'wall [s]':>9}"]
        for r in rows:
            it = "" if r["iterations"] is None else r["iterations"]
            out.append(f"{r['alpha']:>6g} {r['method']:>11} {r['objective']:>16.6f} {it:>6} "
                       f"{r['wall_s']:>9.3f}")
        if len(args.methods) > 1:
            out.append("objectives agree within 1e-4 relative (times are informational)")
        _emit("\n".join(out) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    case = _load(args)
    net = case.network()
    scen = case.scenarios(net)
    summary = {"case": case.name, "buses": net.n, "lines": net.ell, "generators": len(case.generators),
               "contingencies": scen.K, "probability_mass": math.fsum(scen.probabilities),
               "warnings": list(scen.warnings), "valid": True}
    if args.format == "json":
        _emit(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    else:
        _emit(f"{case.name}: valid ({net.n} buses, {net.ell} lines, {scen.K} contingencies, "
              f"probability mass {summary['probability_mass']:.4g})\n")
        for w in scen.warnings:
            _emit(f"warning: {w}\n")
    return EXIT_OK


# --------------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsced", description="Risk-sensitive security-"
                                     "constrained dispatch, pricing and settlement.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt="table"):
        p.add_argument("--case", default="case3_fig3",
                       help=f"case file path or bundled name ({', '.join(BUNDLED)})")
        p.add_argument("--synthetic", type=int, metavar="N",
                       help="use a synthetic ring-plus-chords network with N buses")
        p.add_argument("--seed", type=int, default=0, help="seed for --synthetic")
        p.add_argument("--tol", type=float)
        p.add_argument("--engine", help="LP engine (default: built-in simplex)")
        p.add_argument("--out", help="also write the JSON report to this path")
        p.add_argument("--format", choices=("json", "csv", "table"), default=fmt)

    def solve_flags(p):
        p.add_argument("--variant", choices=[v.value for v in Variant])
        p.add_argument("--alpha", type=float)
        p.add_argument("--method", choices=("monolithic", "benders"))
        p.add_argument("--pricing", choices=("nlmp", "slmp", "both", "none"))
        p.add_argument("--psced-limit", dest="psced_limit", choices=("nominal", "se", "da"))

    p = sub.add_parser("solve", help="solve one dispatch problem and report")
    common(p)
    solve_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("price", help="solve and settle under both pricing schemes")
    common(p)
    solve_flags(p)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("sweep", help="sweep alpha or one contingency probability")
    common(p, fmt="csv")
    p.add_argument("--axis", choices=("alpha", "probability"), default="alpha")
    p.add_argument("--grid", type=_floats, help="comma-separated grid values")
    p.add_argument("--target", help="line id or from-to bus pair for probability sweeps")
    p.add_argument("--alpha", dest="alphas", type=_floats,
                   help="comma-separated alpha values for probability sweeps")
    p.add_argument("--pricing", choices=("nlmp", "slmp", "both", "none"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="compare monolithic and Benders solves")
    common(p)
    p.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m],
                   default=["monolithic", "benders"])
    p.add_argument("--alpha", dest="alphas", type=_floats)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="load and check a case file")
    common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "methods", None):
        bad = [m for m in args.methods if m not in ("monolithic", "benders")]
        if bad:
            print(f"rsced: error: unknown method(s) {', '.join(bad)}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps onto an exit code
        code = exit_code(exc)
        label = type(exc).__name__
        print(f"rsced: {label}: {exc}", file=sys.stderr)
        if code == EXIT_SOLVER and not isinstance(exc, RscedError):
            logger.exception("unexpected failure")
        return code


if __name__ == "__main__":
    sys.exit(main())
