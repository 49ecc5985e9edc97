"""LP representation, engines and certificate checks.

``solve`` routes through a small engine registry. ``"simplex"`` is the built-in
revised simplex and the default; ``"highs"`` wraps ``scipy.optimize.linprog``
when scipy is installed. ``RSCED_LP_ENGINE`` overrides the default.
"""
from __future__ import annotations

import os
from typing import Callable

import numpy as np

from .kkt import KktReport, verify_kkt
from .lpformat import read_lp, write_lp
from .program import LinearProgram, LpSolution, Status, dual_objective
from .simplex import SimplexOptions, solve_simplex

__all__ = [
    "KktReport", "LinearProgram", "LpSolution", "SimplexOptions", "Status",
    "dual_objective", "engines", "read_lp", "register_engine", "solve",
    "solve_simplex", "verify_kkt", "write_lp",
]

Engine = Callable[[LinearProgram], LpSolution]
_ENGINES: dict[str, Engine] = {}


def register_engine(name: str, engine: Engine) -> None:
    _ENGINES[name] = engine


def engines() -> list[str]:
    return sorted(_ENGINES)


def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    kwargs = dict(
        A_ub=lp.A_in if lp.num_in else None, b_ub=lp.b_in if lp.num_in else None,
        A_eq=lp.A_eq if lp.num_eq else None, b_eq=lp.b_eq if lp.num_eq else None,
        bounds=list(zip(np.where(np.isfinite(lp.lo), lp.lo, None),
                        np.where(np.isfinite(lp.hi), lp.hi, None))),
        method="highs",
    )
    res = linprog(lp.c, **kwargs)
    if res.status == 2:
        # presolve can misreport an unbounded model as infeasible; confirm without it
        res = linprog(lp.c, options={"presolve": False}, **kwargs)
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, engine="highs")
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, engine="highs")
    if res.status != 0:
        raise RuntimeError(f"highs failed: {res.message}")
    # scipy reports d(objective)/d(rhs); flip into the Lagrangian convention
    return LpSolution(
        Status.OPTIMAL, primal=np.asarray(res.x, dtype=float), objective=float(res.fun),
        dual_eq=-np.asarray(res.eqlin.marginals) if lp.num_eq else np.zeros(0),
        dual_ineq=-np.asarray(res.ineqlin.marginals) if lp.num_in else np.zeros(0),
        dual_lower=np.asarray(res.lower.marginals, dtype=float),
        dual_upper=-np.asarray(res.upper.marginals, dtype=float),
        iterations=int(res.nit), engine="highs",
    )


register_engine("simplex", solve_simplex)
register_engine("highs", _solve_highs)


def solve(lp: LinearProgram, engine: str | None = None) -> LpSolution:
    name = engine or os.environ.get("RSCED_LP_ENGINE", "simplex")
    try:
        fn = _ENGINES[name]
    except KeyError:
        raise ValueError(f"unknown LP engine {name!r}; choose from {engines()}") from None
    return fn(lp)
