"""Dense two-phase bounded-variable revised simplex.

Columns are laid out as ``[structural | slacks (one per <= row) | artificials
(one per row)]``. Only the structural block is stored; slack and artificial
columns are signed unit vectors and are handled implicitly. The basis inverse
is kept explicitly, updated by eta pivots and refactored periodically.

Pricing is Devex (or Dantzig) with a Harris two-pass ratio test. After
``bland_after`` consecutive pivots that leave the objective unchanged the
solver switches to Bland's smallest-index rule until the objective moves
again, which rules out cycling. ``rule="bland"`` uses Bland's rule throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from ..errors import CyclingDetected, NumericalFailure
from .program import LinearProgram, LpSolution, Status

logger = logging.getLogger(__name__)

_AT_LO, _AT_HI, _AT_ZERO, _BASIC = 0, 1, 2, 3
_NOISE = 256 * np.finfo(float).eps


@dataclass(frozen=True)
class SimplexOptions:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    pivot_tol: float = 1e-9
    refactor_every: int = 64
    max_iter: int | None = None
    bland_after: int = 30
    rule: str = "hybrid"
    pricing: str = "devex"      # or "dantzig"
    cond_limit: float = 1e13
    scale: bool = True
    # LPs with more <= rows than this are solved by lazy row activation; 0 disables
    lazy_rows: int = 300


@dataclass(frozen=True)
class _Basis:
    """Scale-invariant basis snapshot used to warm-start a related LP."""
    struct_state: np.ndarray   # per structural: _AT_LO/_AT_HI/_AT_ZERO/_BASIC
    slack_basic: np.ndarray    # per <= row
    art_basic: np.ndarray      # per row (equalities first)
    art_sign: np.ndarray


class _RevisedSimplex:
    def __init__(self, lp: LinearProgram, opts: SimplexOptions, warm: _Basis | None = None):
        self.lp = lp
        self.opts = opts
        self.m_eq, self.m_in, self.N = lp.num_eq, lp.num_in, lp.num_vars
        self.m = self.m_eq + self.m_in
        self.A = np.vstack([lp.A_eq, lp.A_in]) if self.m else np.zeros((0, self.N))
        self.absA = np.abs(self.A)
        self.colmax = self.absA.max(axis=0) if self.m else np.zeros(self.N)
        self.b = np.concatenate([lp.b_eq, lp.b_in])
        self.s0 = self.N
        self.a0 = self.N + self.m_in
        T = self.a0 + self.m
        self.T = T
        self.lo = np.concatenate([lp.lo, np.zeros(self.m_in), np.zeros(self.m)])
        self.hi = np.concatenate([lp.hi, np.full(self.m_in, np.inf), np.zeros(self.m)])
        self.art_sign = np.ones(self.m)
        self.x = np.zeros(T)
        self.state = np.full(T, _AT_LO, dtype=np.int8)
        self.pos = np.full(T, -1, dtype=np.int64)
        self.iterations = 0
        self.since_refactor = 0
        self.degenerate_run = 0
        if opts.max_iter is not None:
            self.max_iter = opts.max_iter
        else:
            self.max_iter = 20_000 + 50 * (self.m + self.N)
        if warm is None or not self._warm_basis(warm):
            self._initial_basis()

    # -- setup -------------------------------------------------------------
    def _initial_basis(self):
        N, lo, hi = self.N, self.lo, self.hi
        for j in range(N):
            if np.isfinite(lo[j]):
                self.x[j], self.state[j] = lo[j], _AT_LO
            elif np.isfinite(hi[j]):
                self.x[j], self.state[j] = hi[j], _AT_HI
            else:
                self.x[j], self.state[j] = 0.0, _AT_ZERO
        resid = self.b - self.A @ self.x[:N]
        self.basis = np.empty(self.m, dtype=np.int64)
        for i in range(self.m):
            if i >= self.m_eq and resid[i] >= 0.0:
                j = self.s0 + i - self.m_eq
            else:
                sign = 1.0 if resid[i] >= 0.0 else -1.0
                self.art_sign[i] = sign
                j = self.a0 + i
                self.hi[j] = np.inf
            self.basis[i] = j
            self.pos[j] = i
            self.state[j] = _BASIC
            self.x[j] = abs(resid[i])
        self.etas: list[tuple[int, np.ndarray]] = []
        self._refactor()

    def _warm_basis(self, warm: _Basis) -> bool:
        """Start from a previous basis; rows it violates get an artificial. False = unusable."""
        N = self.N
        st = np.asarray(warm.struct_state, dtype=np.int8)
        basic = np.concatenate([np.flatnonzero(st == _BASIC),
                                self.s0 + np.flatnonzero(warm.slack_basic),
                                self.a0 + np.flatnonzero(warm.art_basic)]).astype(np.int64)
        if basic.size != self.m:
            return False
        self.state[:N] = st
        at = np.where(st == _AT_LO, self.lo[:N], np.where(st == _AT_HI, self.hi[:N], 0.0))
        self.x[:N] = np.where(np.isfinite(at), at, 0.0)
        self.art_sign = np.asarray(warm.art_sign, dtype=float).copy()
        self.hi[self.a0:][warm.art_basic] = np.inf
        self.basis = basic
        self.pos[basic] = np.arange(self.m)
        self.state[basic] = _BASIC
        self.etas = []
        try:
            self._refactor()
        except NumericalFailure:
            return False
        # a basic slack that went negative belongs to a row the old basis violates
        slacks = self.x[self.s0:self.a0]
        bad = np.flatnonzero((self.pos[self.s0:self.a0] >= 0)
                             & (slacks < -self.opts.feas_tol * (1.0 + np.abs(self.b[self.m_eq:]))))
        if bad.size:
            for i in bad:
                s_col, a_col = self.s0 + i, self.a0 + self.m_eq + i
                p = self.pos[s_col]
                self.pos[s_col], self.state[s_col], self.x[s_col] = -1, _AT_LO, 0.0
                self.art_sign[self.m_eq + i] = -1.0
                self.hi[a_col] = np.inf
                self.basis[p], self.pos[a_col], self.state[a_col] = a_col, p, _BASIC
            self._refactor()
        return True

    def snapshot(self) -> _Basis:
        return _Basis(self.state[:self.N].copy(), self.pos[self.s0:self.a0] >= 0,
                      self.pos[self.a0:] >= 0, self.art_sign.copy())

    # -- linear algebra helpers ----------------------------------------------
    def _column(self, j: int) -> np.ndarray:
        if j < self.N:
            return self.A[:, j]
        col = np.zeros(self.m)
        if j < self.a0:
            col[self.m_eq + j - self.s0] = 1.0
        else:
            col[j - self.a0] = self.art_sign[j - self.a0]
        return col

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        """Solve ``B x = v`` (x indexed by basis position)."""
        x = np.empty(self.m)
        vr = v[self.rows_r]
        x[self.pos_c] = self.Minv @ vr
        x[self.pos_u] = (v[self.rows_u] - self.coupling @ vr) / self.sign_u
        for p, col in self.etas:
            xp = x[p] / col[p]
            x -= col * xp
            x[p] = xp
        return x

    def _btran(self, c: np.ndarray) -> np.ndarray:
        """Solve ``y^T B = c^T`` (c indexed by basis position)."""
        c = c.copy()
        for p, col in reversed(self.etas):
            c[p] -= (c @ col - c[p]) / col[p]
        y = np.empty(self.m)
        cu = c[self.pos_u] / self.sign_u
        y[self.rows_u] = cu
        y[self.rows_r] = c[self.pos_c] @ self.Minv - cu @ self.coupling
        return y

    def _binv_column(self, j: int) -> np.ndarray:
        return self._ftran(self._column(j))

    def _nonbasic_activity(self) -> np.ndarray:
        xn = np.where(self.pos < 0, self.x, 0.0)
        act = self.A @ xn[:self.N]
        act[self.m_eq:] += xn[self.s0:self.a0]
        act += self.art_sign * xn[self.a0:]
        return act

    def _unit_row(self, j: int):
        """(row, sign) for slack and artificial columns, None for structurals."""
        if j < self.N:
            return None
        if j < self.a0:
            return self.m_eq + j - self.s0, 1.0
        return j - self.a0, self.art_sign[j - self.a0]

    def _refactor(self):
        if self.m == 0:
            empty = np.zeros(0, dtype=np.int64)
            self.rows_r = self.pos_c = self.pos_u = self.rows_u = empty
            self.sign_u = np.zeros(0)
            self.Minv = np.zeros((0, 0))
            self.coupling = np.zeros((0, 0))
            return
        # B is block triangular once unit (slack/artificial) columns are split off,
        # so only the structural block needs a dense inverse
        units, struct = [], []
        for p, j in enumerate(self.basis):
            u = self._unit_row(int(j))
            (struct if u is None else units).append((p, int(j), u))
        covered = np.zeros(self.m, dtype=bool)
        for _, _, (row, _) in units:
            covered[row] = True
        rows_r = np.flatnonzero(~covered)
        if rows_r.size != len(struct):
            raise NumericalFailure("basis matrix is singular")
        cols = np.array([j for _, j, _ in struct], dtype=np.int64)
        self.rows_r = rows_r
        self.pos_c = np.array([p for p, _, _ in struct], dtype=np.int64)
        self.pos_u = np.array([p for p, _, _ in units], dtype=np.int64)
        rows_u = np.array([u[0] for _, _, u in units], dtype=np.int64)
        self.rows_u = rows_u
        self.sign_u = np.array([u[1] for _, _, u in units])
        if cols.size:
            try:
                self.Minv = np.linalg.inv(self.A[np.ix_(rows_r, cols)])
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure("basis matrix is singular") from exc
            self.coupling = self.A[np.ix_(rows_u, cols)] @ self.Minv
            norm_b = max(1.0, float(self.absA[:, cols].sum(axis=0).max()))
            norm_binv = max(1.0, float((np.abs(self.Minv).sum(axis=0)
                                        + np.abs(self.coupling).sum(axis=0)).max()))
        else:
            self.Minv = np.zeros((0, 0))
            self.coupling = np.zeros((rows_u.size, 0))
            norm_b = norm_binv = 1.0
        cond = norm_b * norm_binv
        if not np.isfinite(cond) or cond > self.opts.cond_limit:
            raise NumericalFailure(f"basis condition number {cond:.3g} exceeds limit")
        self.etas = []
        self.x[self.basis] = self._ftran(self.b - self._nonbasic_activity())
        self.since_refactor = 0

    def _reduced_costs(self, cost: np.ndarray):
        if self.m:
            cb = cost[self.basis]
            nz = np.flatnonzero(cb)
            y = self._btran(cb) if nz.size else np.zeros(self.m)
        else:
            y = np.zeros(0)
        d = np.empty(self.T)
        d[:self.N] = cost[:self.N] - y @ self.A
        d[self.s0:self.a0] = cost[self.s0:self.a0] - y[self.m_eq:]
        d[self.a0:] = cost[self.a0:] - self.art_sign * y
        # rounding noise in d_j grows with the magnitudes summed into it
        ay = np.abs(y)
        noise = np.abs(cost)
        noise[:self.N] += ay @ self.absA
        noise[self.s0:self.a0] += ay[self.m_eq:]
        noise[self.a0:] += ay
        # y comes out of a back-solve, so each entry carries rounding on the scale of the
        # largest dual; a column touching only small duals still inherits it
        ymax = float(ay.max()) if ay.size else 0.0
        noise[:self.N] += ymax * self.colmax
        noise[self.s0:] += ymax
        self.d_tol = self.opts.opt_tol + _NOISE * noise
        return y, d

    # -- one phase -----------------------------------------------------------
    def _entering(self, d: np.ndarray, bland: bool):
        tol = self.d_tol
        nonbasic = self.pos < 0
        movable = self.hi > self.lo
        st = self.state
        inc = nonbasic & movable & (st != _AT_HI) & (d < -tol)
        dec = nonbasic & movable & (st != _AT_LO) & (d > tol)
        eligible = inc | dec
        if not eligible.any():
            return None, 0
        if bland:
            q = int(np.flatnonzero(eligible)[0])
        else:
            merit = d * d / self.w if self.opts.pricing == "devex" else np.abs(d)
            q = int(np.argmax(np.where(eligible, merit, -1.0)))
        return q, (1 if inc[q] else -1)

    def _update_weights(self, q: int, p: int, alpha: np.ndarray) -> None:
        """Devex reference-weight update for entering ``q`` at basis position ``p``."""
        e = np.zeros(self.m)
        e[p] = 1.0
        rho = self._btran(e)
        row = np.empty(self.T)
        row[:self.N] = rho @ self.A
        row[self.s0:self.a0] = rho[self.m_eq:]
        row[self.a0:] = self.art_sign * rho
        ratio = row / alpha[p]
        wq = self.w[q]
        np.maximum(self.w, ratio * ratio * wq, out=self.w)
        self.w[int(self.basis[p])] = max(wq / (alpha[p] * alpha[p]), 1.0)
        if self.w.max() > 1e8:
            self.w[:] = 1.0

    def _ratio_test(self, q: int, direction: int, alpha: np.ndarray, bland: bool):
        """Return (t, leaving position or -1 for a bound flip); t=inf means unbounded."""
        piv = self.opts.pivot_tol
        delta = direction * alpha
        xb = self.x[self.basis]
        lob = self.lo[self.basis]
        hib = self.hi[self.basis]
        dec = (delta > piv) & np.isfinite(lob)
        inc = (delta < -piv) & np.isfinite(hib)
        ratios = np.full(self.m, np.inf)
        ratios[dec] = (xb[dec] - lob[dec]) / delta[dec]
        ratios[inc] = (hib[inc] - xb[inc]) / (-delta[inc])
        t_flip = self.hi[q] - self.lo[q]
        t_min = ratios.min() if self.m else np.inf
        if t_flip <= t_min:
            return (t_flip, -1, delta) if np.isfinite(t_flip) else (np.inf, -1, delta)
        if not np.isfinite(t_min):
            return np.inf, -1, delta
        if bland:
            cands = np.flatnonzero(ratios <= t_min + 1e-12 * (1.0 + abs(t_min)))
            p = int(cands[np.argmin(self.basis[cands])])
        else:
            ftol = self.opts.feas_tol
            relaxed = np.full(self.m, np.inf)
            relaxed[dec] = (xb[dec] - lob[dec] + ftol) / delta[dec]
            relaxed[inc] = (hib[inc] - xb[inc] + ftol) / (-delta[inc])
            cands = np.flatnonzero(ratios <= relaxed.min())
            p = int(cands[np.argmax(np.abs(delta[cands]))])
        return max(ratios[p], 0.0), p, delta

    def _pivot(self, q: int, direction: int, t: float, p: int, alpha: np.ndarray, delta: np.ndarray):
        self.x[q] += direction * t
        if self.m:
            self.x[self.basis] -= t * delta
        if p < 0:
            if direction > 0:
                self.x[q], self.state[q] = self.hi[q], _AT_HI
            else:
                self.x[q], self.state[q] = self.lo[q], _AT_LO
            return
        leave = int(self.basis[p])
        if delta[p] > 0:
            self.x[leave], self.state[leave] = self.lo[leave], _AT_LO
        else:
            self.x[leave], self.state[leave] = self.hi[leave], _AT_HI
        self.pos[leave] = -1
        self.basis[p] = q
        self.pos[q] = p
        self.state[q] = _BASIC
        self.etas.append((p, alpha.copy()))
        self.since_refactor += 1
        if self.since_refactor >= self.opts.refactor_every:
            self._refactor()

    def _run_phase(self, cost: np.ndarray):
        """Iterate to optimality of ``cost``. Returns None or an unbounded ray."""
        always_bland = self.opts.rule == "bland"
        self.w = np.ones(self.T)
        confirmed = False
        while True:
            if self.iterations >= self.max_iter:
                raise CyclingDetected(f"simplex exceeded {self.max_iter} iterations")
            bland = always_bland or self.degenerate_run >= self.opts.bland_after
            _, d = self._reduced_costs(cost)
            q, direction = self._entering(d, bland)
            if q is None:
                if confirmed:
                    return None
                # re-verify on a fresh factorization before declaring optimality
                self._refactor()
                confirmed = True
                continue
            confirmed = False
            alpha = self._binv_column(q)
            t, p, delta = self._ratio_test(q, direction, alpha, bland)
            if not np.isfinite(t):
                ray = np.zeros(self.T)
                ray[q] = direction
                ray[self.basis] = -delta
                return ray
            # a pivot counts as progress only if the objective visibly drops; a positive
            # step along a noise-level reduced cost can loop just like a degenerate one
            gain = abs(d[q]) * t
            stalled = t <= 1e-12 or gain <= 1e-12 * (1.0 + abs(float(cost @ self.x)))
            self.degenerate_run = self.degenerate_run + 1 if stalled else 0
            if p >= 0 and self.opts.pricing == "devex":
                self._update_weights(q, p, alpha)
            self._pivot(q, direction, t, p, alpha, delta)
            self.iterations += 1

    # -- driver --------------------------------------------------------------
    def run(self) -> LpSolution:
        lp = self.lp
        if np.any(self.hi[self.a0:] > 0):
            cost1 = np.zeros(self.T)
            cost1[self.a0:] = 1.0
            self._run_phase(cost1)
            # per-row test so a small row is not masked by large right-hand sides elsewhere
            art = self.x[self.a0:]
            if np.any(art > self.opts.feas_tol * (1.0 + np.abs(self.b))):
                y, _ = self._reduced_costs(cost1)
                return LpSolution(Status.INFEASIBLE, primal=self.x[:self.N].copy(),
                                  iterations=self.iterations, certificate=y, engine="simplex")
        self.hi[self.a0:] = 0.0
        cost = np.zeros(self.T)
        cost[:self.N] = lp.c
        self.degenerate_run = 0
        ray = self._run_phase(cost)
        if ray is not None:
            return LpSolution(Status.UNBOUNDED, primal=self.x[:self.N].copy(),
                              iterations=self.iterations, certificate=ray[:self.N],
                              engine="simplex")
        return self._solution(cost)

    def _solution(self, cost: np.ndarray) -> LpSolution:
        y, d = self._reduced_costs(cost)
        x = self.x[:self.N].copy()
        dual_eq = -y[:self.m_eq]
        dual_ineq = np.maximum(-y[self.m_eq:], 0.0)
        dN = d[:self.N]
        nonbasic = self.pos[:self.N] < 0
        st = self.state[:self.N]
        fixed = self.lo[:self.N] == self.hi[:self.N]
        lower_active = nonbasic & ((st == _AT_LO) | fixed)
        upper_active = nonbasic & ((st == _AT_HI) | fixed)
        dual_lower = np.where(lower_active, np.maximum(dN, 0.0), 0.0)
        dual_upper = np.where(upper_active, np.maximum(-dN, 0.0), 0.0)
        return LpSolution(Status.OPTIMAL, primal=x, objective=float(self.lp.c @ x),
                          dual_eq=dual_eq, dual_ineq=dual_ineq, dual_lower=dual_lower,
                          dual_upper=dual_upper, iterations=self.iterations, engine="simplex")


def _pow2(v: np.ndarray) -> np.ndarray:
    return np.exp2(np.round(np.log2(v)))


def _geometric(big: np.ndarray, small: np.ndarray) -> np.ndarray:
    out = np.ones_like(big)
    live = big > 0
    out[live] = 1.0 / np.sqrt(big[live] * small[live])
    return out


def _equilibrate(lp: LinearProgram, passes: int = 6):
    """Geometric row/column scaling factors, rounded to powers of two.

    Returns ``(row, col)`` so the scaled matrix is ``diag(row) @ A @ diag(col)``.
    """
    A = np.abs(np.vstack([lp.A_eq, lp.A_in]))
    A[A < 1e-12 * A.max(initial=0.0)] = 0.0
    m, n = A.shape
    row, col = np.ones(m), np.ones(n)
    if A.size == 0 or not A.any():
        return row, col
    for _ in range(passes):
        S = A * row[:, None] * col[None, :]
        rmax, rmin = S.max(axis=1), np.where(S > 0, S, np.inf).min(axis=1)
        row *= _geometric(rmax, rmin)
        S = A * row[:, None] * col[None, :]
        cmax, cmin = S.max(axis=0), np.where(S > 0, S, np.inf).min(axis=0)
        col *= _geometric(cmax, cmin)
    return _pow2(row), _pow2(col)


def solve_simplex(lp: LinearProgram, options: SimplexOptions | None = None) -> LpSolution:
    opts = options or SimplexOptions()
    if opts.lazy_rows and lp.num_in > opts.lazy_rows:
        return _solve_lazy(lp, opts)
    return _solve_scaled(lp, opts)[0]


def _restrict(lp: LinearProgram, rows: np.ndarray) -> LinearProgram:
    return LinearProgram(lp.c, lp.A_eq, lp.b_eq, lp.A_in[rows], lp.b_in[rows], lp.lo, lp.hi,
                         lp.var_labels, lp.eq_labels, tuple(lp.in_labels[i] for i in rows),
                         lp.name)


def _solve_lazy(lp: LinearProgram, opts: SimplexOptions) -> LpSolution:
    """Solve over a growing subset of the ``<=`` rows until no omitted row is violated.

    Dropping rows relaxes the LP, so an infeasible subset proves infeasibility and
    an optimum that satisfies every omitted row is optimal for the full problem
    (omitted rows get zero multipliers). Large dispatch LPs carry thousands of
    post-outage flow rows of which only a handful ever bind. Each round restarts
    from the previous basis, so only the newly added rows need repair.
    """
    m_eq, m_in = lp.num_eq, lp.num_in
    active = np.zeros(m_in, dtype=bool)
    tol = opts.feas_tol * (1.0 + np.abs(lp.b_in))
    # basis bookkeeping in full-LP row numbering; unseen rows start with their slack basic
    slack_basic = np.ones(m_in, dtype=bool)
    art_basic = np.zeros(m_eq + m_in, dtype=bool)
    art_sign = np.ones(m_eq + m_in)
    struct_state = None
    iterations, rounds = 0, 0
    while True:
        rows = np.flatnonzero(active)
        local = np.concatenate([np.arange(m_eq), m_eq + rows])
        warm = None
        if struct_state is not None:
            warm = _Basis(struct_state, slack_basic[rows], art_basic[local], art_sign[local])
        sol, basis = _solve_scaled(_restrict(lp, rows), opts, warm)
        iterations += sol.iterations
        rounds += 1
        if basis is not None:
            struct_state = basis.struct_state
            slack_basic[rows] = basis.slack_basic
            art_basic[local] = basis.art_basic
            art_sign[local] = basis.art_sign
        if sol.status is Status.INFEASIBLE:
            cert = None
            if sol.certificate is not None:
                cert = np.zeros(m_eq + m_in)
                cert[local] = sol.certificate
            return LpSolution(Status.INFEASIBLE, primal=sol.primal, iterations=iterations,
                              certificate=cert, engine="simplex")
        if sol.status is Status.UNBOUNDED:
            # add the omitted rows that cut off the ray; none left means a true ray
            cutting = ~active & (lp.A_in @ sol.certificate > opts.feas_tol)
            if not cutting.any():
                full, _ = _solve_scaled(lp, opts)
                return replace(full, iterations=iterations + full.iterations)
            active |= cutting
            continue
        if not sol.optimal:
            return replace(sol, iterations=iterations)
        violated = ~active & (lp.A_in @ sol.primal - lp.b_in > tol)
        if not violated.any():
            dual_ineq = np.zeros(m_in)
            dual_ineq[rows] = sol.dual_ineq
            logger.debug("%s: %d of %d <= rows active after %d rounds",
                         lp.name, rows.size, m_in, rounds)
            return replace(sol, dual_ineq=dual_ineq, iterations=iterations)
        active |= violated


def _solve_scaled(lp: LinearProgram, opts: SimplexOptions,
                  warm: _Basis | None = None) -> tuple[LpSolution, _Basis | None]:
    row, col = _equilibrate(lp) if opts.scale else (None, None)
    if row is None or (np.all(row == 1.0) and np.all(col == 1.0)):
        solver = _RevisedSimplex(lp, opts, warm)
        sol = solver.run()
        return sol, solver.snapshot()
    m_eq = lp.num_eq
    r_eq, r_in = row[:m_eq], row[m_eq:]
    scaled = LinearProgram(
        lp.c * col, lp.A_eq * r_eq[:, None] * col[None, :], lp.b_eq * r_eq,
        lp.A_in * r_in[:, None] * col[None, :], lp.b_in * r_in, lp.lo / col, lp.hi / col,
        lp.var_labels, lp.eq_labels, lp.in_labels, lp.name)
    solver = _RevisedSimplex(scaled, opts, warm)
    sol = solver.run()
    # x = col * x', row duals = row * y', bound duals = y' / col
    primal = sol.primal * col if sol.primal.size else sol.primal
    cert = sol.certificate
    if cert is not None:
        cert = cert * (row if sol.status is Status.INFEASIBLE else col)
    if not sol.optimal:
        return LpSolution(sol.status, primal=primal, iterations=sol.iterations,
                          certificate=cert, engine="simplex"), solver.snapshot()
    return LpSolution(
        Status.OPTIMAL, primal=primal, objective=float(lp.c @ primal),
        dual_eq=sol.dual_eq * r_eq, dual_ineq=sol.dual_ineq * r_in,
        dual_lower=sol.dual_lower / col, dual_upper=sol.dual_upper / col,
        iterations=sol.iterations, engine="simplex"), solver.snapshot()
