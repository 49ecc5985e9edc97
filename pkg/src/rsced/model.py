"""Dispatch LPs (ED, P-SCED, C-SCED, R-SCED), their solution maps, and CVaR.

Flat variable layout, first stage first::

    [z] g r_lo r_hi | per scenario k: [y_k] dg_k [dd_k]

``z`` and ``y_k`` exist only for R-SCED, ``r_*`` and ``dg_k`` for C-SCED and
R-SCED (C-SCED pins ``r`` at the reserve caps), and ``dd_k`` only for R-SCED.
Rows are ordered the same way: rows touching first-stage variables only come
first, then each scenario's rows in one contiguous run.

Multiplier signs follow the Lagrangian ``cost + sum(mult * (lhs - rhs))`` over
``<=`` rows; the balance multipliers ``lam`` and ``lam_k`` are reported with
the market sign (price of energy), which is the negative of the raw LP dual on
``1'g = 1'd``.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp as lpmod
from .errors import InfeasibleProblem, InvalidAlpha, SolveFailed, UnboundedProblem
from .lp import KktReport, LinearProgram, LpSolution, Status
from .network import Network, ScenarioSet, no_contingencies

logger = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    ED = "ed"
    PSCED = "psced"
    CSCED = "csced"
    RSCED = "rsced"


@dataclass(frozen=True)
class RowBlock:
    """Rows of one constraint family. ``members`` maps each row to a bus or directed line."""

    kind: str  # "eq" or "in"
    rows: np.ndarray
    members: np.ndarray
    scenario: int | None = None


@dataclass(frozen=True)
class VariableIndex:
    variant: Variant
    network: Network
    scenarios: ScenarioSet
    alpha: float
    num_vars: int
    g: slice
    z: int | None = None
    r_lo: slice | None = None
    r_hi: slice | None = None
    y: tuple[int, ...] = ()
    dg: tuple[slice, ...] = ()
    dd: tuple[slice, ...] = ()
    first_stage: slice = slice(0, 0)
    blocks: dict = field(default_factory=dict)
    psced_limit: str = "nominal"

    @property
    def K(self) -> int:
        return self.scenarios.K

    def scenario_vars(self, k: int) -> slice:
        """Contiguous variable range of scenario ``k``."""
        start = self.y[k] if self.y else self.dg[k].start
        stop = self.dd[k].stop if self.dd else self.dg[k].stop
        return slice(start, stop)

    def block(self, name: str, k: int | None = None) -> RowBlock | None:
        return self.blocks.get((name, k))


class _Rows:
    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.eq: list[tuple[np.ndarray, float, str]] = []
        self.ineq: list[tuple[np.ndarray, float, str]] = []
        self.blocks: dict = {}

    def add(self, kind, name, k, coeffs, rhs, members, labels):
        """Append rows given as a list of ``{col: coef}`` dicts (or dense rows)."""
        target = self.eq if kind == "eq" else self.ineq
        start = len(target)
        for row, b, lab in zip(coeffs, rhs, labels):
            if isinstance(row, dict):
                dense = np.zeros(self.num_vars)
                for col, val in row.items():
                    dense[col] += val
            else:
                dense = row
            target.append((dense, float(b), lab))
        rows = np.arange(start, len(target))
        self.blocks[(name, k)] = RowBlock(kind, rows, np.asarray(members, dtype=int), k)

    def matrices(self):
        def stack(rows):
            if not rows:
                return np.zeros((0, self.num_vars)), np.zeros(0), ()
            return (np.array([r for r, _, _ in rows]), np.array([b for _, b, _ in rows]),
                    tuple(lab for _, _, lab in rows))
        return stack(self.eq), stack(self.ineq)


def _flow_rows(H, limit, d, cols_list, num_vars, prefix):
    """Rows ``H @ (sum of var blocks) <= limit + H @ d``; rows with infinite limits are dropped."""
    keep = np.flatnonzero(np.isfinite(limit))
    coeffs = []
    for j in keep:
        dense = np.zeros(num_vars)
        for cols in cols_list:
            dense[cols] += H[j]
        coeffs.append(dense)
    rhs = limit[keep] + H[keep] @ d
    return coeffs, rhs, keep, [f"{prefix},{j}]" if "[" in prefix else f"{prefix}[{j}]" for j in keep]


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0 or math.isnan(alpha):
        raise InvalidAlpha(f"alpha must lie in [0, 1), got {alpha}")
    return alpha


def _assemble(network: Network, scenarios: ScenarioSet | None, variant: Variant,
              alpha: float = 0.0, psced_limit: str = "nominal") -> tuple[LinearProgram, VariableIndex]:
    if scenarios is None or variant is Variant.ED:
        scenarios = no_contingencies(network)
    n, K = network.n, scenarios.K
    recourse = variant in (Variant.CSCED, Variant.RSCED)
    shed = variant is Variant.RSCED

    # variable layout
    pos = 0
    z = None
    if shed:
        z, pos = 0, 1
    g = slice(pos, pos + n)
    pos += n
    r_lo = r_hi = None
    if recourse:
        r_lo, r_hi = slice(pos, pos + n), slice(pos + n, pos + 2 * n)
        pos += 2 * n
    first_stage = slice(0, pos)
    y, dg, dd = [], [], []
    if recourse:
        for _ in range(K):
            if shed:
                y.append(pos)
                pos += 1
            dg.append(slice(pos, pos + n))
            pos += n
            if shed:
                dd.append(slice(pos, pos + n))
                pos += n
    N = pos

    labels = [""] * N
    c = np.zeros(N)
    lo = np.zeros(N)
    hi = np.full(N, np.inf)
    buses = range(n)

    def name(sl, base, k=None):
        for i, j in enumerate(range(sl.start, sl.stop)):
            labels[j] = f"{base}[{i}]" if k is None else f"{base}[{k},{i}]"

    c[g], lo[g], hi[g] = network.cost, network.gmin, network.gmax
    name(g, "g")
    if shed:
        labels[z] = "z"
        c[z] = 1.0
    if recourse:
        name(r_lo, "r_lo")
        name(r_hi, "r_hi")
        if shed:
            c[r_lo], c[r_hi] = network.reserve_cost_down, network.reserve_cost_up
            hi[r_lo], hi[r_hi] = network.reserve_cap_down, network.reserve_cap_up
        else:
            # corrective dispatch with reserve fixed at the caps, no reserve cost
            lo[r_lo] = hi[r_lo] = network.reserve_cap_down
            lo[r_hi] = hi[r_hi] = network.reserve_cap_up
        weight = scenarios.probabilities / (1.0 - alpha)
        for k in range(K):
            name(dg[k], "dg", k)
            lo[dg[k]], hi[dg[k]] = -np.inf, np.inf
            if shed:
                labels[y[k]] = f"y[{k}]"
                c[y[k]] = weight[k]
                name(dd[k], "dd", k)
                hi[dd[k]] = network.load_shed_cap

    d = network.demand
    H = scenarios.nominal_isf
    rows = _Rows(N)
    rows.add("eq", "balance", None, [{j: 1.0 for j in range(g.start, g.stop)}], [d.sum()],
             [0], ["balance"])
    coeffs, rhs, keep, labs = _flow_rows(H, np.concatenate([network.capacity] * 2), d, [g], N, "flow")
    rows.add("in", "flow", None, coeffs, rhs, keep, labs)

    if variant is Variant.PSCED:
        pick = {"nominal": scenarios.limits_nominal, "se": scenarios.limits_se,
                "da": scenarios.limits_da}
        if psced_limit not in pick:
            raise ValueError(f"psced_limit must be one of {sorted(pick)}")
        for k in range(K):
            coeffs, rhs, keep, labs = _flow_rows(scenarios.isf[k], pick[psced_limit](k), d, [g], N,
                                                 f"da[{k}")
            rows.add("in", "da", k, coeffs, rhs, keep, labs)
    if recourse:
        for k in range(K):
            coeffs, rhs, keep, labs = _flow_rows(scenarios.isf[k], scenarios.limits_da(k), d, [g], N,
                                                 f"da[{k}")
            rows.add("in", "da", k, coeffs, rhs, keep, labs)
        gmin, gmax = network.gmin, network.gmax
        for k in range(K):
            Hk = scenarios.isf[k]
            dgk = range(dg[k].start, dg[k].stop)
            row = {j: 1.0 for j in dgk}
            if shed:
                row.update({j: 1.0 for j in range(dd[k].start, dd[k].stop)})
            rows.add("eq", "se_balance", k, [row], [0.0], [0], [f"se_balance[{k}]"])
            cols = [g, dg[k]] + ([dd[k]] if shed else [])
            coeffs, rhs, keep, labs = _flow_rows(Hk, scenarios.limits_se(k), d, cols, N, f"se[{k}")
            rows.add("in", "se", k, coeffs, rhs, keep, labs)
            rows.add("in", "gen_hi", k, [{g.start + i: 1.0, dg[k].start + i: 1.0} for i in buses],
                     gmax, buses, [f"gen_hi[{k},{i}]" for i in buses])
            rows.add("in", "gen_lo", k, [{g.start + i: -1.0, dg[k].start + i: -1.0} for i in buses],
                     -gmin, buses, [f"gen_lo[{k},{i}]" for i in buses])
            rows.add("in", "dg_hi", k, [{dg[k].start + i: 1.0, r_hi.start + i: -1.0} for i in buses],
                     np.zeros(n), buses, [f"dg_hi[{k},{i}]" for i in buses])
            rows.add("in", "dg_lo", k, [{dg[k].start + i: -1.0, r_lo.start + i: -1.0} for i in buses],
                     np.zeros(n), buses, [f"dg_lo[{k},{i}]" for i in buses])
            if shed:
                epi = {j: v for j, v in zip(range(dd[k].start, dd[k].stop), network.voll)}
                epi[z] = -1.0
                epi[y[k]] = -1.0
                rows.add("in", "epi", k, [epi], [0.0], [0], [f"epi[{k}]"])

    (A_eq, b_eq, eq_labels), (A_in, b_in, in_labels) = rows.matrices()
    lp = LinearProgram(c, A_eq, b_eq, A_in, b_in, lo, hi, var_labels=tuple(labels),
                       eq_labels=eq_labels, in_labels=in_labels,
                       name=f"{variant.value}" + (f"_alpha{alpha:g}" if shed else ""))
    index = VariableIndex(variant, network, scenarios, alpha, N, g, z, r_lo, r_hi, tuple(y),
                          tuple(dg), tuple(dd), first_stage, rows.blocks, psced_limit)
    return lp, index


def build_ed(network: Network) -> tuple[LinearProgram, VariableIndex]:
    return _assemble(network, None, Variant.ED)


def build_psced(network: Network, scenarios: ScenarioSet,
                limit: str = "nominal") -> tuple[LinearProgram, VariableIndex]:
    """Preventive SCED; ``limit`` picks the post-contingency rating (nominal, se or da)."""
    return _assemble(network, scenarios, Variant.PSCED, psced_limit=limit)


def build_csced(network: Network, scenarios: ScenarioSet) -> tuple[LinearProgram, VariableIndex]:
    return _assemble(network, scenarios, Variant.CSCED)


def build_rsced(network: Network, scenarios: ScenarioSet,
                alpha: float) -> tuple[LinearProgram, VariableIndex]:
    alpha = _check_alpha(alpha)
    return _assemble(network, scenarios, Variant.RSCED, alpha)


def build(variant: Variant | str, network: Network, scenarios: ScenarioSet | None = None,
          alpha: float = 0.0, psced_limit: str = "nominal"):
    variant = Variant(variant)
    if variant is Variant.ED:
        return build_ed(network)
    if scenarios is None:
        scenarios = no_contingencies(network)
    if variant is Variant.PSCED:
        return build_psced(network, scenarios, psced_limit)
    if variant is Variant.CSCED:
        return build_csced(network, scenarios)
    return build_rsced(network, scenarios, alpha)


# --------------------------------------------------------------------------- solutions
@dataclass(frozen=True)
class DispatchSolution:
    variant: Variant
    alpha: float
    objective: float
    g: np.ndarray
    z: float
    y: np.ndarray          # (K,)
    r_lo: np.ndarray
    r_hi: np.ndarray
    dg: np.ndarray         # (K, n)
    dd: np.ndarray         # (K, n)
    # multipliers
    lam: float
    mu: np.ndarray         # (2l,)
    mu_da: np.ndarray      # (K, 2l), zero on dropped rows
    mu_se: np.ndarray      # (K, 2l)
    lam_k: np.ndarray      # (K,)
    gamma_lo: np.ndarray
    gamma_hi: np.ndarray
    gamma_lo_k: np.ndarray  # (K, n)
    gamma_hi_k: np.ndarray
    rho_lo: np.ndarray      # (K, n)
    rho_hi: np.ndarray
    eta_lo: np.ndarray
    eta_hi: np.ndarray
    kappa_lo: np.ndarray    # reserve-cap multipliers
    kappa_hi: np.ndarray
    sigma_lo: np.ndarray    # (K, n)
    sigma_hi: np.ndarray
    nu_lo: np.ndarray       # (K,)
    nu_hi: np.ndarray
    zeta: float
    nominal_cost: float
    reserve_cost: float
    cvar_term: float
    kkt: KktReport | None
    index: VariableIndex = field(repr=False)
    lp_solution: LpSolution | None = field(default=None, repr=False)

    @property
    def network(self) -> Network:
        return self.index.network

    @property
    def scenarios(self) -> ScenarioSet:
        return self.index.scenarios

    @property
    def total_shed(self) -> float:
        return float(self.dd.sum())

    @property
    def has_duals(self) -> bool:
        return self.lp_solution is not None and self.lp_solution.dual_eq.size > 0


def _scatter(values, block, size):
    out = np.zeros(size)
    if block is not None and block.rows.size:
        out[block.members] = values[block.rows]
    return out


def unflatten(lp: LinearProgram, index: VariableIndex, sol: LpSolution,
              kkt: KktReport | None = None) -> DispatchSolution:
    """Map a flat primal/dual LP solution back onto named dispatch quantities."""
    net, K = index.network, index.K
    n, two_l = net.n, 2 * net.ell
    x = sol.primal
    has_duals = sol.dual_eq.size == lp.num_eq and lp.num_eq > 0
    dl = sol.dual_lower if has_duals else np.zeros(lp.num_vars)
    du = sol.dual_upper if has_duals else np.zeros(lp.num_vars)
    de = sol.dual_eq if has_duals else np.zeros(lp.num_eq)
    di = sol.dual_ineq if has_duals else np.zeros(lp.num_in)

    def per_k(fn, width):
        return np.array([fn(k) for k in range(K)]).reshape(K, width)

    def ineq(name, k, width):
        return _scatter(di, index.block(name, k), width)

    g = x[index.g].copy()
    z = float(x[index.z]) if index.z is not None else 0.0
    y = np.array([x[j] for j in index.y]) if index.y else np.zeros(K)
    r_lo = x[index.r_lo].copy() if index.r_lo is not None else np.zeros(n)
    r_hi = x[index.r_hi].copy() if index.r_hi is not None else np.zeros(n)
    dg = per_k(lambda k: x[index.dg[k]], n) if index.dg else np.zeros((K, n))
    dd = per_k(lambda k: x[index.dd[k]], n) if index.dd else np.zeros((K, n))

    bal = index.block("balance")
    lam = -float(de[bal.rows[0]])
    lam_k = np.array([-de[index.block("se_balance", k).rows[0]] for k in range(K)]) \
        if index.dg else np.zeros(K)

    if index.dg:
        rho_lo = per_k(lambda k: ineq("dg_lo", k, n), n)
        rho_hi = per_k(lambda k: ineq("dg_hi", k, n), n)
        gamma_lo_k = per_k(lambda k: ineq("gen_lo", k, n), n)
        gamma_hi_k = per_k(lambda k: ineq("gen_hi", k, n), n)
        mu_se = per_k(lambda k: ineq("se", k, two_l), two_l)
    else:
        rho_lo = rho_hi = gamma_lo_k = gamma_hi_k = np.zeros((K, n))
        mu_se = np.zeros((K, two_l))
    mu_da = per_k(lambda k: ineq("da", k, two_l), two_l)

    shed = index.variant is Variant.RSCED
    if shed:
        eta_lo, eta_hi = dl[index.r_lo].copy(), dl[index.r_hi].copy()
        kappa_lo, kappa_hi = du[index.r_lo].copy(), du[index.r_hi].copy()
    else:
        eta_lo = eta_hi = kappa_lo = kappa_hi = np.zeros(n)
    sigma_lo = per_k(lambda k: dl[index.dd[k]], n) if index.dd else np.zeros((K, n))
    sigma_hi = per_k(lambda k: du[index.dd[k]], n) if index.dd else np.zeros((K, n))
    nu_lo = np.array([dl[j] for j in index.y]) if index.y else np.zeros(K)
    nu_hi = np.array([di[index.block("epi", k).rows[0]] for k in range(K)]) if shed else np.zeros(K)
    zeta = float(dl[index.z]) if index.z is not None else 0.0

    nominal = float(net.cost @ g)
    reserve = float(net.reserve_cost_down @ r_lo + net.reserve_cost_up @ r_hi) if shed else 0.0
    if shed:
        probs = index.scenarios.probabilities
        cvar_term = z + math.fsum(probs * y) / (1.0 - index.alpha)
    else:
        cvar_term = 0.0

    return DispatchSolution(
        variant=index.variant, alpha=index.alpha, objective=float(sol.objective),
        g=g, z=z, y=y, r_lo=r_lo, r_hi=r_hi, dg=dg, dd=dd,
        lam=lam, mu=_scatter(di, index.block("flow"), two_l), mu_da=mu_da, mu_se=mu_se,
        lam_k=lam_k, gamma_lo=dl[index.g].copy(), gamma_hi=du[index.g].copy(),
        gamma_lo_k=gamma_lo_k, gamma_hi_k=gamma_hi_k, rho_lo=rho_lo, rho_hi=rho_hi,
        eta_lo=eta_lo, eta_hi=eta_hi, kappa_lo=kappa_lo, kappa_hi=kappa_hi,
        sigma_lo=sigma_lo, sigma_hi=sigma_hi, nu_lo=nu_lo, nu_hi=nu_hi, zeta=zeta,
        nominal_cost=nominal, reserve_cost=reserve, cvar_term=cvar_term,
        kkt=kkt, index=index, lp_solution=sol,
    )


_LABEL = {Variant.ED: "ED", Variant.PSCED: "P-SCED", Variant.CSCED: "C-SCED",
          Variant.RSCED: "R-SCED"}


def solve_dispatch(lp: LinearProgram, index: VariableIndex, engine: str | None = None,
                   kkt_tol: float = 1e-6) -> DispatchSolution:
    sol = lpmod.solve(lp, engine)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleProblem(sol.status, f"{_LABEL[index.variant]} LP is infeasible")
    if sol.status is Status.UNBOUNDED:
        raise UnboundedProblem(sol.status, f"{_LABEL[index.variant]} LP is unbounded")
    if not sol.optimal:
        raise SolveFailed(sol.status)
    report = lpmod.verify_kkt(lp, sol, kkt_tol)
    if not report.ok(kkt_tol):
        logger.warning("%s: KKT residual %.3g exceeds %.1g (worst: %s)",
                       lp.name, report.worst, kkt_tol, report.top(3))
    return unflatten(lp, index, sol, report)


def dispatch(variant: Variant | str, network: Network, scenarios: ScenarioSet | None = None,
             alpha: float = 0.0, psced_limit: str = "nominal",
             engine: str | None = None) -> DispatchSolution:
    """Build and solve in one call."""
    lp, index = build(variant, network, scenarios, alpha, psced_limit)
    return solve_dispatch(lp, index, engine)


def stationarity_residuals(sol: DispatchSolution) -> dict[str, float]:
    """Max-abs residual of each named stationarity condition, from named multipliers only.

    This restates the optimality conditions of the R-SCED LP by hand (with the
    ``z >= 0`` multiplier ``zeta`` and the reserve-cap multipliers ``kappa``)
    rather than reusing the flat LP, so it cross-checks the dual mapping.
    """
    net, sc = sol.network, sol.scenarios
    H = sc.nominal_isf
    one = np.ones(net.n)
    res: dict[str, float] = {}
    sec = sum((sc.isf[k].T @ (sol.mu_da[k] + sol.mu_se[k]) - sol.gamma_lo_k[k] + sol.gamma_hi_k[k]
               for k in range(sc.K)), np.zeros(net.n))
    res["g"] = np.abs(net.cost - sol.lam * one + H.T @ sol.mu - sol.gamma_lo + sol.gamma_hi
                      + sec).max()
    if sol.variant is not Variant.RSCED:
        return {k: float(v) for k, v in res.items()}
    res["r_lo"] = np.abs(net.reserve_cost_down - sol.eta_lo + sol.kappa_lo
                         - sol.rho_lo.sum(axis=0)).max()
    res["r_hi"] = np.abs(net.reserve_cost_up - sol.eta_hi + sol.kappa_hi
                         - sol.rho_hi.sum(axis=0)).max()
    p = sc.probabilities
    res["z"] = abs(1.0 - sol.nu_hi.sum() - sol.zeta)
    worst_dg = worst_dd = worst_y = 0.0
    for k in range(sc.K):
        Hk_mu = sc.isf[k].T @ sol.mu_se[k]
        r_dg = (-sol.lam_k[k] * one + Hk_mu - sol.gamma_lo_k[k] + sol.gamma_hi_k[k]
                + sol.rho_hi[k] - sol.rho_lo[k])
        r_dd = (-sol.lam_k[k] * one + Hk_mu - sol.sigma_lo[k] + sol.sigma_hi[k]
                + sol.nu_hi[k] * net.voll)
        r_y = p[k] / (1.0 - sol.alpha) - sol.nu_lo[k] - sol.nu_hi[k]
        worst_dg = max(worst_dg, np.abs(r_dg).max())
        worst_dd = max(worst_dd, np.abs(r_dd).max())
        worst_y = max(worst_y, abs(r_y))
    res["dg"], res["dd"], res["y"] = worst_dg, worst_dd, worst_y
    return {k: float(v) for k, v in res.items()}


# --------------------------------------------------------------------------- CVaR
@dataclass(frozen=True)
class LoadShedDistribution:
    """Finite loss distribution: ``outcomes`` are ``(cost, probability)`` pairs."""

    outcomes: tuple[tuple[float, float], ...]

    def __post_init__(self):
        outs = tuple((float(c), float(p)) for c, p in self.outcomes)
        if not outs:
            raise ValueError("distribution needs at least one outcome")
        if any(p < 0 for _, p in outs):
            raise ValueError("probabilities must be nonnegative")
        if any(c < 0 for c, _ in outs):
            raise ValueError("load-shed costs must be nonnegative")
        total = math.fsum(p for _, p in outs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        object.__setattr__(self, "outcomes", outs)

    @property
    def costs(self) -> np.ndarray:
        return np.array([c for c, _ in self.outcomes])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.outcomes])

    def expectation(self) -> float:
        return math.fsum(c * p for c, p in self.outcomes)


def cvar(alpha: float, distribution: LoadShedDistribution | Sequence[tuple[float, float]]) -> float:
    """``min_z z + E[(xi - z)^+] / (1 - alpha)``, scanning ``z`` over the outcome values.

    The objective is piecewise linear and convex in ``z`` with kinks at the
    outcomes, so one of them attains the minimum.
    """
    alpha = _check_alpha(alpha)
    if not isinstance(distribution, LoadShedDistribution):
        distribution = LoadShedDistribution(tuple(distribution))
    if alpha == 0.0:
        return distribution.expectation()
    scale = 1.0 / (1.0 - alpha)
    outs = distribution.outcomes
    best = math.inf
    for z, _ in outs:
        val = z + scale * math.fsum(p * (c - z) for c, p in outs if c > z)
        best = min(best, val)
    return best


def shed_distribution(solution: DispatchSolution,
                      scenarios: ScenarioSet | None = None) -> LoadShedDistribution:
    scenarios = scenarios or solution.scenarios
    voll = solution.network.voll
    probs = scenarios.probabilities
    outcomes = [(max(float(voll @ solution.dd[k]), 0.0), float(probs[k]))
                for k in range(scenarios.K)]
    outcomes.append((0.0, max(0.0, 1.0 - math.fsum(probs))))
    return LoadShedDistribution(tuple(outcomes))
