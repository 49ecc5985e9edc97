"""Benders decomposition of the R-SCED LP.

The first stage is ``x0 = (z, g, r_lo, r_hi)``; scenario ``k`` owns
``x_k = (y_k, dg_k, dd_k)``. Each scenario block is written in pure inequality
form ``A_k x0 + E_k x_k <= b_k`` (equalities split into pairs, variable bounds
turned into rows), so the subproblem dual is simply ``c_k + E_k' lam = 0,
lam >= 0`` and every dual vector gives a valid optimality cut

    J_k(x0') >= lam' (A_k x0' - b_k).

Subproblems that are infeasible at the current ``x0`` are re-solved with
heavily penalized nonnegative slacks on every row; their duals are still dual
feasible for the unpenalized problem (``0 <= lam <= penalty``), so the cut stays
valid and pushes the master away from the infeasible region.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod
from .errors import IterationLimit, NotDecomposable, SubproblemUnbounded
from .lp import LinearProgram, LpSolution, Status
from .model import DispatchSolution, VariableIndex, Variant, unflatten

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioBlock:
    k: int
    cols: slice           # x_k position in the monolithic vector
    c: np.ndarray         # unit cost on y_k
    weight: float         # p_k / (1 - alpha)
    A: np.ndarray         # rows x n0
    E: np.ndarray         # rows x n_k
    b: np.ndarray
    labels: tuple[str, ...]
    # provenance, used to rebuild the monolithic LP
    eq_rows: np.ndarray
    in_rows: np.ndarray
    bound_rows: tuple[tuple[int, str], ...]   # (local var, "lo" | "hi")


@dataclass(frozen=True)
class BlockDecomposition:
    lp: LinearProgram
    index: VariableIndex
    n0: int
    first_stage: LinearProgram
    first_eq_rows: np.ndarray
    first_in_rows: np.ndarray
    blocks: tuple[ScenarioBlock, ...]

    @property
    def K(self) -> int:
        return len(self.blocks)

    def reassemble(self) -> LinearProgram:
        """Rebuild the monolithic LP from the blocks (inverse of :func:`decompose`)."""
        lp, n0 = self.lp, self.n0
        A_eq = np.zeros_like(lp.A_eq)
        b_eq = np.zeros_like(lp.b_eq)
        A_in = np.zeros_like(lp.A_in)
        b_in = np.zeros_like(lp.b_in)
        lo = np.full(lp.num_vars, -np.inf)
        hi = np.full(lp.num_vars, np.inf)
        c = np.zeros(lp.num_vars)
        fs = self.first_stage
        c[:n0], lo[:n0], hi[:n0] = fs.c, fs.lo, fs.hi
        A_eq[self.first_eq_rows, :n0], b_eq[self.first_eq_rows] = fs.A_eq, fs.b_eq
        A_in[self.first_in_rows, :n0], b_in[self.first_in_rows] = fs.A_in, fs.b_in
        for blk in self.blocks:
            c[blk.cols] = blk.c * blk.weight
            m_eq, m_in = blk.eq_rows.size, blk.in_rows.size
            for local, row in enumerate(blk.eq_rows):
                A_eq[row, :n0], A_eq[row, blk.cols], b_eq[row] = blk.A[local], blk.E[local], blk.b[local]
            for local, row in enumerate(blk.in_rows, start=2 * m_eq):
                A_in[row, :n0], A_in[row, blk.cols], b_in[row] = blk.A[local], blk.E[local], blk.b[local]
            for offset, (var, side) in enumerate(blk.bound_rows, start=2 * m_eq + m_in):
                j = blk.cols.start + var
                if side == "lo":
                    lo[j] = -blk.b[offset]
                else:
                    hi[j] = blk.b[offset]
        return LinearProgram(c, A_eq, b_eq, A_in, b_in, lo, hi, lp.var_labels, lp.eq_labels,
                             lp.in_labels, lp.name)


def decompose(lp: LinearProgram, index: VariableIndex) -> BlockDecomposition:
    if index.variant is not Variant.RSCED:
        raise NotDecomposable(f"only R-SCED problems decompose, got {index.variant.value}")
    n0 = index.first_stage.stop
    if index.first_stage.start != 0 or n0 <= 0:
        raise NotDecomposable("first-stage variables must form a nonempty prefix")
    expected = n0
    for k in range(index.K):
        cols = index.scenario_vars(k)
        if cols.start != expected:
            raise NotDecomposable(f"scenario {k} variables are not contiguous after the first stage")
        expected = cols.stop
    if expected != lp.num_vars:
        raise NotDecomposable("variable index does not cover the LP")

    scen_eq = {k: [] for k in range(index.K)}
    scen_in = {k: [] for k in range(index.K)}
    first_eq, first_in = [], []
    for (name, k), block in index.blocks.items():
        touches_recourse = name not in ("balance", "flow", "da")
        if touches_recourse:
            (scen_eq if block.kind == "eq" else scen_in)[k].extend(block.rows.tolist())
        else:
            (first_eq if block.kind == "eq" else first_in).extend(block.rows.tolist())
    first_eq, first_in = np.array(sorted(first_eq), dtype=int), np.array(sorted(first_in), dtype=int)
    for rows, mat in ((first_eq, lp.A_eq), (first_in, lp.A_in)):
        if rows.size and np.any(mat[np.ix_(rows, np.arange(n0, lp.num_vars))]):
            raise NotDecomposable("a first-stage row references second-stage variables")

    first = LinearProgram(
        lp.c[:n0], lp.A_eq[first_eq, :n0].reshape(-1, n0), lp.b_eq[first_eq],
        lp.A_in[first_in, :n0].reshape(-1, n0), lp.b_in[first_in], lp.lo[:n0], lp.hi[:n0],
        var_labels=lp.var_labels[:n0],
        eq_labels=tuple(lp.eq_labels[i] for i in first_eq),
        in_labels=tuple(lp.in_labels[i] for i in first_in), name=f"{lp.name}_master")

    probs = index.scenarios.probabilities
    blocks = []
    for k in range(index.K):
        cols = index.scenario_vars(k)
        nk = cols.stop - cols.start
        eq_rows = np.array(sorted(scen_eq[k]), dtype=int)
        in_rows = np.array(sorted(scen_in[k]), dtype=int)
        A_parts, E_parts, b_parts, labels = [], [], [], []
        for sign, suffix in ((1.0, "+"), (-1.0, "-")):
            A_parts.append(sign * lp.A_eq[eq_rows, :n0])
            E_parts.append(sign * lp.A_eq[eq_rows, cols])
            b_parts.append(sign * lp.b_eq[eq_rows])
            labels += [lp.eq_labels[i] + suffix for i in eq_rows]
        A_parts.append(lp.A_in[in_rows, :n0])
        E_parts.append(lp.A_in[in_rows, cols])
        b_parts.append(lp.b_in[in_rows])
        labels += [lp.in_labels[i] for i in in_rows]
        bound_rows = []
        for local in range(nk):
            j = cols.start + local
            for side, val in (("lo", lp.lo[j]), ("hi", lp.hi[j])):
                if not np.isfinite(val):
                    continue
                row = np.zeros(nk)
                row[local] = -1.0 if side == "lo" else 1.0
                A_parts.append(np.zeros((1, n0)))
                E_parts.append(row[None, :])
                b_parts.append(np.array([-val if side == "lo" else val]))
                labels.append(f"{lp.var_labels[j]}:{side}")
                bound_rows.append((local, side))
        weight = float(probs[k]) / (1.0 - index.alpha)
        c_k = np.zeros(nk)
        y_local = index.y[k] - cols.start
        c_k[y_local] = 1.0
        if not np.allclose(lp.c[cols], c_k * weight, rtol=0, atol=1e-15):
            raise NotDecomposable(f"scenario {k} cost is not p_k/(1-alpha) on y_k")
        blocks.append(ScenarioBlock(
            k, cols, c_k, weight, np.vstack(A_parts), np.vstack(E_parts),
            np.concatenate(b_parts), tuple(labels), eq_rows, in_rows, tuple(bound_rows)))
    return BlockDecomposition(lp, index, n0, first, first_eq, first_in, tuple(blocks))


@dataclass(frozen=True)
class Cut:
    k: int
    anchor: np.ndarray
    value: float
    gradient: np.ndarray

    def __call__(self, x0: np.ndarray) -> float:
        return self.value + float(self.gradient @ (x0 - self.anchor))


@dataclass(frozen=True)
class SubproblemResult:
    k: int
    value: float          # J_k, penalized value when slack was needed
    dual: np.ndarray      # lam_k >= 0 over block rows
    primal: np.ndarray    # x_k
    slack: float          # total slack used (0 when feasible)
    penalized: bool


def _penalty_weight(decomp: BlockDecomposition) -> float:
    net = decomp.index.network
    scale = max(np.abs(decomp.lp.c).max(initial=0.0), net.voll.max(initial=0.0), 1.0)
    return 1e6 * scale


def solve_subproblem(decomp: BlockDecomposition, k: int, x0: np.ndarray,
                     penalty: float | None = None, engine: str | None = None) -> SubproblemResult:
    """Solve scenario ``k`` at ``x0``; falls back to penalized slacks when infeasible."""
    blk = decomp.blocks[k]
    rhs = blk.b - blk.A @ x0
    nk = blk.E.shape[1]
    free = np.full(nk, -np.inf), np.full(nk, np.inf)
    sub = LinearProgram(blk.c, A_in=blk.E, b_in=rhs, lo=free[0], hi=free[1], name=f"sub{k}")
    sol = lpmod.solve(sub, engine)
    if sol.status is Status.UNBOUNDED:
        raise SubproblemUnbounded(f"scenario {k} subproblem is unbounded")
    if sol.optimal:
        return SubproblemResult(k, sol.objective, sol.dual_ineq, sol.primal, 0.0, False)
    penalty = penalty if penalty is not None else _penalty_weight(decomp)
    m = blk.E.shape[0]
    pen = LinearProgram(
        np.concatenate([blk.c, np.full(m, penalty)]),
        A_in=np.hstack([blk.E, -np.eye(m)]), b_in=rhs,
        lo=np.concatenate([free[0], np.zeros(m)]), hi=np.concatenate([free[1], np.full(m, np.inf)]),
        name=f"sub{k}_penalized")
    sol = lpmod.solve(pen, engine)
    if not sol.optimal:
        raise SubproblemUnbounded(f"penalized scenario {k} subproblem ended {sol.status.value}")
    return SubproblemResult(k, sol.objective, sol.dual_ineq, sol.primal[:nk],
                            float(sol.primal[nk:].sum()), True)


def make_cut(decomp: BlockDecomposition, result: SubproblemResult, x0: np.ndarray) -> Cut:
    blk = decomp.blocks[result.k]
    grad = blk.A.T @ result.dual
    # evaluate the dual objective instead of trusting the primal value
    value = float(result.dual @ (blk.A @ x0 - blk.b))
    return Cut(result.k, x0.copy(), value, grad)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lower_bound: float
    upper_bound: float
    cuts: int
    millis: float


@dataclass
class BendersTrace:
    rows: list[TraceRow] = field(default_factory=list)
    reason: str = ""
    cut_violations: int = 0
    residual_slack: float = 0.0

    @property
    def lower_bounds(self) -> np.ndarray:
        return np.array([r.lower_bound for r in self.rows])

    def is_monotone(self, rtol: float = 1e-9) -> bool:
        lb = self.lower_bounds
        return bool(np.all(np.diff(lb) >= -rtol * (1.0 + np.abs(lb[1:])))) if lb.size > 1 else True

    def to_csv(self, handle=None) -> str:
        buf = handle if handle is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "lower_bound", "upper_bound", "cuts", "millis"])
        for r in self.rows:
            writer.writerow([r.iteration, repr(r.lower_bound), repr(r.upper_bound), r.cuts,
                             f"{r.millis:.3f}"])
        return buf.getvalue() if handle is None else ""


@dataclass(frozen=True)
class BendersResult:
    objective: float
    x0: np.ndarray
    xk: tuple[np.ndarray, ...]
    primal: np.ndarray
    trace: BendersTrace
    solution: DispatchSolution


def _threads(K: int, threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("RSCED_THREADS")
        threads = int(env) if env else min(os.cpu_count() or 1, 8)
    return max(1, min(threads, max(K, 1)))


def _master_lp(decomp: BlockDecomposition, cuts: list[Cut]) -> LinearProgram:
    fs, n0, K = decomp.first_stage, decomp.n0, decomp.K
    weights = np.array([b.weight for b in decomp.blocks])
    c = np.concatenate([fs.c, weights])
    A_eq = np.hstack([fs.A_eq, np.zeros((fs.num_eq, K))])
    rows = [np.hstack([fs.A_in, np.zeros((fs.num_in, K))])]
    rhs = [fs.b_in]
    labels = list(fs.in_labels)
    for i, cut in enumerate(cuts):
        row = np.zeros(n0 + K)
        row[:n0] = cut.gradient
        row[n0 + cut.k] = -1.0
        rows.append(row[None, :])
        rhs.append(np.array([cut.gradient @ cut.anchor - cut.value]))
        labels.append(f"cut[{i},{cut.k}]")
    # t_k >= 0 is valid because every scenario cost (y_k) is nonnegative
    return LinearProgram(
        c, A_eq, fs.b_eq, np.vstack(rows), np.concatenate(rhs),
        np.concatenate([fs.lo, np.zeros(K)]), np.concatenate([fs.hi, np.full(K, np.inf)]),
        var_labels=fs.var_labels + tuple(f"t[{k}]" for k in range(K)),
        eq_labels=fs.eq_labels, in_labels=tuple(labels), name="master")


def benders_solve(decomp: BlockDecomposition, tol: float = 1e-6, max_iter: int = 500,
                  threads: int | None = None, engine: str | None = None,
                  penalty: float | None = None, check_cuts: bool = True) -> BendersResult:
    """Multi-cut Benders loop.

    Stops when every scenario satisfies ``J_k - t_k <= tol * (1 + |J_k|)`` or the
    bound gap closes to ``tol * (1 + |UB|)``. Raises :class:`IterationLimit`
    (carrying the trace) after ``max_iter`` master solves.
    """
    K, n0 = decomp.K, decomp.n0
    trace = BendersTrace()
    cuts: list[Cut] = []
    best_ub, best = math.inf, None
    start = time.perf_counter()
    workers = _threads(K, threads)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 and K > 1 else None
    try:
        for it in range(1, max_iter + 1):
            msol = lpmod.solve(_master_lp(decomp, cuts), engine)
            if not msol.optimal:
                raise SubproblemUnbounded(f"master problem ended {msol.status.value}")
            x0, t = msol.primal[:n0], msol.primal[n0:]
            lb = msol.objective
            if pool is not None:
                results = list(pool.map(lambda k: solve_subproblem(decomp, k, x0, penalty, engine),
                                        range(K)))
            else:
                results = [solve_subproblem(decomp, k, x0, penalty, engine) for k in range(K)]
            feasible = all(not r.penalized or r.slack <= 1e-9 for r in results)
            ub = float(decomp.first_stage.c @ x0) + math.fsum(
                decomp.blocks[r.k].weight * r.value for r in results)
            if feasible and ub < best_ub:
                best_ub, best = ub, (x0.copy(), [r.primal.copy() for r in results])
            if check_cuts:
                for cut in cuts:
                    r = results[cut.k]
                    # rounding in a cut grows with |gradient| * |step| as well as |J|
                    scale = 1.0 + abs(r.value) + abs(cut.value) + float(
                        np.abs(cut.gradient) @ np.abs(x0 - cut.anchor))
                    if not r.penalized and cut(x0) > r.value + 1e-6 * scale:
                        trace.cut_violations += 1
                        logger.warning("cut for scenario %d overestimates J_k by %.3g",
                                       cut.k, cut(x0) - r.value)
            new = [make_cut(decomp, r, x0) for r in results
                   if r.value - t[r.k] > tol * (1.0 + abs(r.value))]
            cuts.extend(new)
            trace.rows.append(TraceRow(it, lb, best_ub, len(cuts),
                                       1000.0 * (time.perf_counter() - start)))
            if not new and feasible:
                trace.reason = "cuts satisfied"
                if ub < best_ub or best is None:
                    best_ub, best = ub, (x0.copy(), [r.primal.copy() for r in results])
                break
            if best is not None and best_ub - lb <= tol * (1.0 + abs(best_ub)):
                trace.reason = "bound gap closed"
                break
            if not new:
                # penalized but no new cut: accept the slack and report it
                trace.reason = "cuts satisfied with residual slack"
                trace.residual_slack = max(r.slack for r in results)
                logger.warning("Benders converged with residual slack %.3g", trace.residual_slack)
                best_ub, best = ub, (x0.copy(), [r.primal.copy() for r in results])
                break
        else:
            trace.reason = "iteration limit"
            raise IterationLimit(f"Benders did not converge in {max_iter} iterations", trace)
    finally:
        if pool is not None:
            pool.shutdown()

    x0, xk = best
    primal = np.concatenate([x0] + xk) if xk else x0.copy()
    lp = decomp.lp
    objective = float(lp.c @ primal)
    sol = unflatten(lp, decomp.index, LpSolution(Status.OPTIMAL, primal=primal, objective=objective,
                                                 engine="benders"))
    return BendersResult(objective, x0, tuple(xk), primal, trace, sol)
