"""Independent reference computations used as test oracles.

None of these route through the package's solver; they only use numpy.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from rsced.lp import LinearProgram


# ---------------------------------------------------------------------------- DC flows
def bmatrix_flows(network, injection, removed=()):
    """Line flows from the phase-angle formulation ``B theta = p``, slack angle 0."""
    n = network.n
    removed = set(removed)
    B = np.zeros((n, n))
    for ln in network.lines:
        if ln.id in removed:
            continue
        b = 1.0 / ln.reactance
        a, c = ln.from_bus, ln.to_bus
        B[a, a] += b
        B[c, c] += b
        B[a, c] -= b
        B[c, a] -= b
    keep = [i for i in range(n) if i != network.slack_bus]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], np.asarray(injection, float)[keep])
    return np.array([0.0 if ln.id in removed else (theta[ln.from_bus] - theta[ln.to_bus]) / ln.reactance
                     for ln in network.lines])


# ---------------------------------------------------------------------------- CVaR
def cvar_tail(alpha, outcomes):
    """CVaR as the mean of the worst ``1 - alpha`` probability mass (sorted-tail formula)."""
    outcomes = [(float(c), float(p)) for c, p in outcomes if p > 0]
    if alpha == 0.0:
        return math.fsum(c * p for c, p in outcomes)
    budget = 1.0 - alpha
    total, used = 0.0, 0.0
    for c, p in sorted(outcomes, key=lambda cp: -cp[0]):
        take = min(p, budget - used)
        if take <= 0:
            break
        total += c * take
        used += take
    return total / budget


def cvar_grid(alpha, outcomes, points=20001):
    """Coarse direct minimization of the variational form on a dense z grid."""
    costs = np.array([c for c, _ in outcomes], float)
    probs = np.array([p for _, p in outcomes], float)
    zs = np.linspace(0.0, costs.max(initial=0.0), points)
    vals = zs + (np.maximum(costs[None, :] - zs[:, None], 0.0) @ probs) / (1.0 - alpha)
    return float(vals.min())


# ---------------------------------------------------------------------------- LP vertices
class VertexResult:
    def __init__(self, status, objective=None, x=None):
        self.status, self.objective, self.x = status, objective, x


def _boxed_rows(lp: LinearProgram, box: float):
    """All constraints as ``G x <= h`` (plus ``E x = f``), with free directions boxed."""
    n = lp.num_vars
    G = [lp.A_in]
    h = [lp.b_in]
    eye = np.eye(n)
    lo = np.where(np.isfinite(lp.lo), lp.lo, -box)
    hi = np.where(np.isfinite(lp.hi), lp.hi, box)
    G += [-eye, eye]
    h += [-lo, hi]
    return np.vstack(G), np.concatenate(h), lp.A_eq, lp.b_eq


def _independent_equalities(E, f):
    """Drop redundant equality rows; None if the equalities are inconsistent."""
    rows = []
    for i in range(E.shape[0]):
        trial = rows + [i]
        if np.linalg.matrix_rank(E[trial]) == len(trial):
            rows = trial
    if E.shape[0]:
        x, *_ = np.linalg.lstsq(E, f, rcond=None)
        if not np.allclose(E @ x, f, atol=1e-9):
            return None
    return E[rows], f[rows]


def _best_vertex(lp: LinearProgram, box: float, tol: float = 1e-9):
    G, h, E_all, f_all = _boxed_rows(lp, box)
    reduced = _independent_equalities(E_all, f_all)
    if reduced is None:
        return math.inf, None
    E, f = reduced
    n, m_eq = lp.num_vars, E.shape[0]
    need = n - m_eq
    if need < 0:
        need = 0
    best, best_x = math.inf, None
    combos = list(itertools.combinations(range(G.shape[0]), need)) if need else [()]
    if not combos:
        return best, best_x
    idx = np.array(combos, dtype=np.int64).reshape(len(combos), need)
    M = np.concatenate([np.broadcast_to(E, (len(combos),) + E.shape), G[idx]], axis=1)
    rhs = np.concatenate([np.broadcast_to(f, (len(combos), m_eq)), h[idx]], axis=1)
    if M.shape[1] != n:
        # more equalities than variables: fall back to least squares on the equalities
        x, *_ = np.linalg.lstsq(E, f, rcond=None)
        cand = [x] if np.allclose(E @ x, f, atol=1e-9) else []
    else:
        det = np.linalg.det(M)
        ok = np.abs(det) > 1e-9
        cand = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0] if ok.any() else []
    for x in cand:
        scale = 1.0 + np.abs(h)
        if np.all(G @ x - h <= tol * scale) and np.allclose(E_all @ x, f_all, atol=1e-7):
            val = float(lp.c @ x)
            if val < best:
                best, best_x = val, x
    return best, best_x


def vertex_enumeration(lp: LinearProgram, box: float = 1e6) -> VertexResult:
    """Optimal value by enumerating every basic solution of the boxed LP.

    Unboundedness shows up as an optimum that keeps improving when the artificial
    box grows; an empty vertex set means the LP is infeasible.
    """
    v1, x1 = _best_vertex(lp, box)
    if x1 is None:
        return VertexResult("infeasible")
    v2, _ = _best_vertex(lp, 10.0 * box)
    if v2 < v1 - 1e-6 * (1.0 + abs(v1)):
        return VertexResult("unbounded")
    return VertexResult("optimal", v1, x1)


def count_combinations(lp: LinearProgram) -> int:
    m_total = lp.num_in + 2 * lp.num_vars
    return math.comb(m_total, max(lp.num_vars - lp.num_eq, 0))


def random_lp(rng, max_vars=8, max_combos=40_000):
    """Small random LP with integer data; rejection keeps enumeration cheap."""
    while True:
        n = int(rng.integers(1, max_vars + 1))
        me = int(rng.integers(0, min(3, n + 1)))
        mi = int(rng.integers(0, 7))
        A_in = rng.integers(-5, 6, (mi, n)).astype(float)
        b_in = rng.integers(-3, 10, mi).astype(float)
        A_eq = rng.integers(-3, 4, (me, n)).astype(float)
        b_eq = rng.integers(-3, 4, me).astype(float)
        c = rng.integers(-5, 6, n).astype(float)
        lo = np.where(rng.random(n) < 0.2, -np.inf, rng.integers(-3, 1, n).astype(float))
        hi = np.where(rng.random(n) < 0.3, np.inf, lo + rng.integers(0, 6, n))
        hi = np.where(np.isinf(lo) & np.isinf(hi), np.inf, hi)
        hi = np.where(np.isinf(lo), np.where(rng.random(n) < 0.5, np.inf, rng.integers(0, 4, n)), hi)
        lp = LinearProgram(c, A_eq, b_eq, A_in, b_in, lo, hi)
        if count_combinations(lp) <= max_combos:
            return lp
