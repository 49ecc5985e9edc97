"""Nodal prices from dispatch multipliers and the resulting market settlement.

Two ex-ante schemes are supported. ``nlmp`` prices only the nominal network,
``slmp`` adds every scenario's congestion component. ``settle`` turns a price
vector into demand payments, supplier payments (energy plus reserve),
merchandising surplus, lost-opportunity-cost (LOC) uplift and total revenue.

Duals at degenerate optima are not unique, so individual prices can differ
between solvers. The surplus and revenue guarantees hold for any optimal
multiplier set, which is why ``theorem_audit`` checks settlement scalars.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingDuals, TheoremViolation
from .model import DispatchSolution, Variant
from .network import GeneratorSpec

logger = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    EDLMP = "edlmp"
    NLMP = "nlmp"
    SLMP = "slmp"


@dataclass(frozen=True)
class PriceVector:
    scheme: Scheme
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("prices must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size


def _require_duals(sol: DispatchSolution) -> None:
    if not sol.has_duals:
        raise MissingDuals("solution carries no multipliers (was it produced by Benders "
                           "without a monolithic re-solve?)")


def edlmp(sol: DispatchSolution) -> PriceVector:
    _require_duals(sol)
    H = sol.scenarios.nominal_isf
    return PriceVector(Scheme.EDLMP, sol.lam - H.T @ sol.mu)


def nlmp(sol: DispatchSolution) -> PriceVector:
    _require_duals(sol)
    H = sol.scenarios.nominal_isf
    return PriceVector(Scheme.NLMP, sol.lam - H.T @ sol.mu)


def _scenario_congestion(sol: DispatchSolution) -> np.ndarray:
    sc = sol.scenarios
    total = np.zeros(sol.network.n)
    for k in range(sc.K):
        total += sc.isf[k].T @ (sol.mu_da[k] + sol.mu_se[k])
    return total


def slmp(sol: DispatchSolution) -> PriceVector:
    _require_duals(sol)
    return PriceVector(Scheme.SLMP, nlmp(sol).values - _scenario_congestion(sol))


def profit_max_dispatch(price: float, gen: GeneratorSpec) -> float:
    """Energy-only best response; ties (price == cost) go to ``gmax``."""
    return gen.gmax if price >= gen.cost else gen.gmin


def _gamma(prices: np.ndarray, sol: DispatchSolution) -> np.ndarray:
    net = sol.network
    gap = np.where(prices >= net.cost, net.gmax - sol.g, sol.g - net.gmin)
    # g* may sit a rounding error outside its bounds
    return np.maximum(gap, 0.0)


def loc_payments(sol: DispatchSolution, prices: PriceVector) -> np.ndarray:
    """``|pi_i - c_i| * Gamma_i`` per generator."""
    pi = prices.values
    return np.abs(pi - sol.network.cost) * _gamma(pi, sol)


def _gen_bound_terms(sol: DispatchSolution) -> np.ndarray:
    return (sol.gamma_hi - sol.gamma_lo + sol.gamma_hi_k.sum(axis=0)
            - sol.gamma_lo_k.sum(axis=0))


def loc_nlmp_closed_form(sol: DispatchSolution) -> np.ndarray:
    """LOC under N-LMP written through generator-bound and scenario-congestion multipliers."""
    _require_duals(sol)
    weight = np.abs(_gen_bound_terms(sol) + _scenario_congestion(sol))
    return weight * _gamma(nlmp(sol).values, sol)


def loc_slmp_closed_form(sol: DispatchSolution) -> np.ndarray:
    _require_duals(sol)
    return np.abs(_gen_bound_terms(sol)) * _gamma(slmp(sol).values, sol)


@dataclass(frozen=True)
class SettlementReport:
    prices: PriceVector
    demand_payments: np.ndarray
    energy_payments: np.ndarray
    reserve_payments: np.ndarray
    supplier_payments: np.ndarray
    ms: float
    loc: np.ndarray
    total_revenue: float
    theorem_flags: dict = field(default_factory=dict)

    @property
    def total_loc(self) -> float:
        return math.fsum(self.loc)


def reserve_payments(sol: DispatchSolution) -> np.ndarray:
    """Per-bus ``sum_k rho_hi[k] * r_hi + rho_lo[k] * r_lo``."""
    return sol.rho_hi.sum(axis=0) * sol.r_hi + sol.rho_lo.sum(axis=0) * sol.r_lo


def settle(sol: DispatchSolution, prices: PriceVector, tol: float = 1e-6) -> SettlementReport:
    pi = prices.values
    demand_pay = pi * sol.network.demand
    energy = pi * sol.g
    reserve = reserve_payments(sol)
    supplier = energy + reserve
    ms = math.fsum(demand_pay) - math.fsum(supplier)
    loc = loc_payments(sol, prices)
    revenue = ms - math.fsum(loc)
    flags = {"revenue_adequate": ms >= -tol, "total_revenue_nonneg": revenue >= -tol}
    return SettlementReport(prices, demand_pay, energy, reserve, supplier, ms, loc, revenue, flags)


@dataclass(frozen=True)
class AuditRow:
    alpha: float
    ms_nlmp: float
    ms_slmp: float
    loc_nlmp: float
    loc_slmp: float
    revenue_nlmp: float
    revenue_slmp: float
    flags: dict
    findings: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha, "ms_nlmp": self.ms_nlmp, "ms_slmp": self.ms_slmp,
            "loc_nlmp": self.loc_nlmp, "loc_slmp": self.loc_slmp,
            "revenue_nlmp": self.revenue_nlmp, "revenue_slmp": self.revenue_slmp,
            **self.flags,
        }


def theorem_audit(sol: DispatchSolution, tol: float = 1e-6) -> AuditRow:
    """Settle under both schemes and check the S-LMP guarantees.

    A negative surplus or total revenue under S-LMP means a bug and raises
    :class:`TheoremViolation`. Negative N-LMP surplus is legitimate and is only
    recorded as a finding.
    """
    if sol.variant not in (Variant.RSCED, Variant.CSCED):
        raise ValueError(f"audit needs a C-SCED or R-SCED solution, got {sol.variant.value}")
    rep_n = settle(sol, nlmp(sol), tol)
    rep_s = settle(sol, slmp(sol), tol)
    if rep_s.ms < -tol:
        raise TheoremViolation(f"S-LMP merchandising surplus {rep_s.ms:.6g} < 0 "
                               f"(variant {sol.variant.value}, alpha {sol.alpha})")
    if rep_s.total_revenue < -tol:
        raise TheoremViolation(f"S-LMP total revenue {rep_s.total_revenue:.6g} < 0 "
                               f"(variant {sol.variant.value}, alpha {sol.alpha})")
    findings = []
    if rep_n.ms < -tol:
        findings.append(f"N-LMP merchandising surplus is negative ({rep_n.ms:.6g})")
    if rep_n.total_revenue < -tol:
        findings.append(f"N-LMP total revenue is negative ({rep_n.total_revenue:.6g})")
    for msg in findings:
        logger.info(msg)
    flags = {
        "slmp_revenue_adequate": True,
        "slmp_total_revenue_nonneg": True,
        "nlmp_revenue_adequate": rep_n.ms >= -tol,
        "nlmp_total_revenue_nonneg": rep_n.total_revenue >= -tol,
    }
    return AuditRow(sol.alpha, rep_n.ms, rep_s.ms, rep_n.total_loc, rep_s.total_loc,
                    rep_n.total_revenue, rep_s.total_revenue, flags, tuple(findings))
