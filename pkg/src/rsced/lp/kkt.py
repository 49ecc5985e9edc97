"""KKT residuals for a solved LinearProgram.

Uses the sign convention documented on :class:`LpSolution`. Every residual is
an absolute number; callers pick the tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .program import LinearProgram, LpSolution, dual_objective


@dataclass(frozen=True)
class KktReport:
    max_primal_residual: float
    max_dual_residual: float
    max_complementarity_residual: float
    max_stationarity_residual: float
    duality_gap: float
    # label -> worst residual of any kind attached to that row/variable
    breakdown: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_primal_residual, self.max_dual_residual,
                   self.max_complementarity_residual, self.max_stationarity_residual)

    def ok(self, tol: float = 1e-6) -> bool:
        return self.worst <= tol

    def top(self, count: int = 5) -> list[tuple[str, float]]:
        items = sorted(self.breakdown.items(), key=lambda kv: -kv[1])
        return items[:count]


def _bound_gap(x, bound, sign):
    """``sign*(x - bound)`` where the bound is finite, else 0."""
    mask = np.isfinite(bound)
    gap = np.zeros_like(x)
    gap[mask] = sign * (x[mask] - bound[mask])
    return gap, mask


def verify_kkt(lp: LinearProgram, sol: LpSolution, tol: float = 1e-6) -> KktReport:
    """Stationarity, primal and dual feasibility and complementarity residuals.

    ``tol`` only controls which labels land in ``breakdown`` (those above
    ``tol / 10``); the maxima are always reported.
    """
    x = sol.primal
    lam, mu = sol.dual_eq, sol.dual_ineq
    g_lo, g_hi = sol.dual_lower, sol.dual_upper
    breakdown: dict[str, float] = {}

    def note(labels, values, kind):
        for i in np.flatnonzero(values > tol / 10):
            key = f"{kind}:{labels[i]}"
            breakdown[key] = max(breakdown.get(key, 0.0), float(values[i]))

    r_eq = np.abs(lp.A_eq @ x - lp.b_eq)
    r_in = np.maximum(lp.A_in @ x - lp.b_in, 0.0)
    lo_gap, lo_mask = _bound_gap(x, lp.lo, 1.0)
    hi_gap, hi_mask = _bound_gap(x, lp.hi, -1.0)
    r_bounds = np.maximum(np.maximum(-lo_gap, 0.0), np.maximum(-hi_gap, 0.0))
    note(lp.eq_labels, r_eq, "primal")
    note(lp.in_labels, r_in, "primal")
    note(lp.var_labels, r_bounds, "bound")

    # multipliers on absent bounds must vanish
    d_mu = np.maximum(-mu, 0.0)
    d_lo = np.maximum(-g_lo, 0.0) + np.where(lo_mask, 0.0, np.abs(g_lo))
    d_hi = np.maximum(-g_hi, 0.0) + np.where(hi_mask, 0.0, np.abs(g_hi))
    note(lp.in_labels, d_mu, "dual")
    note(lp.var_labels, d_lo + d_hi, "dual")

    stat = np.abs(lp.c + lp.A_eq.T @ lam + lp.A_in.T @ mu - g_lo + g_hi)
    note(lp.var_labels, stat, "stat")

    slack_in = lp.b_in - lp.A_in @ x
    cs_in = np.abs(mu * slack_in)
    cs_lo = np.abs(g_lo * lo_gap)
    cs_hi = np.abs(g_hi * hi_gap)
    note(lp.in_labels, cs_in, "cs")
    note(lp.var_labels, cs_lo + cs_hi, "cs")

    def mx(*arrays):
        return float(max((a.max() for a in arrays if a.size), default=0.0))

    gap = abs(float(lp.c @ x) - dual_objective(lp, sol))
    return KktReport(
        max_primal_residual=mx(r_eq, r_in, r_bounds),
        max_dual_residual=mx(d_mu, d_lo, d_hi),
        max_complementarity_residual=mx(cs_in, cs_lo, cs_hi),
        max_stationarity_residual=mx(stat),
        duality_gap=gap,
        breakdown=breakdown,
    )
