from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(a, ncols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, ncols) if a.size else np.zeros((0, ncols))
    return a


@dataclass(frozen=True)
class LinearProgram:
    """``min c@x  s.t.  A_eq@x == b_eq,  A_in@x <= b_in,  lo <= x <= hi``.

    Infinite bounds are given as ``-inf``/``inf``; the solver never replaces
    them with big-M values.
    """

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    var_labels: tuple[str, ...] = ()
    eq_labels: tuple[str, ...] = ()
    in_labels: tuple[str, ...] = ()
    name: str = "lp"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        m = c.size
        A_eq = _as_matrix(self.A_eq, m)
        A_in = _as_matrix(self.A_in, m)
        b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        b_in = np.zeros(0) if self.b_in is None else np.asarray(self.b_in, dtype=float).ravel()
        lo = np.zeros(m) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        hi = np.full(m, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if A_eq.shape != (b_eq.size, m) or A_in.shape != (b_in.size, m):
            raise ValueError("constraint block dimensions are inconsistent")
        if lo.size != m or hi.size != m:
            raise ValueError("bounds must have one entry per variable")
        if np.any(lo > hi):
            j = int(np.argmax(lo > hi))
            raise ValueError(f"variable {j}: lower bound {lo[j]} exceeds upper bound {hi[j]}")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValueError("bounds cannot be +inf below or -inf above")
        if not (np.all(np.isfinite(b_eq)) and np.all(np.isfinite(b_in))):
            raise ValueError("right-hand sides must be finite; drop rows with infinite limits")
        var_labels = tuple(self.var_labels) or tuple(f"x{j}" for j in range(m))
        eq_labels = tuple(self.eq_labels) or tuple(f"e{i}" for i in range(b_eq.size))
        in_labels = tuple(self.in_labels) or tuple(f"r{i}" for i in range(b_in.size))
        if (len(var_labels), len(eq_labels), len(in_labels)) != (m, b_eq.size, b_in.size):
            raise ValueError("label counts do not match problem dimensions")
        for key, val in dict(c=c, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in, lo=lo, hi=hi,
                             var_labels=var_labels, eq_labels=eq_labels,
                             in_labels=in_labels).items():
            object.__setattr__(self, key, val)

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_eq(self) -> int:
        return self.b_eq.size

    @property
    def num_in(self) -> int:
        return self.b_in.size


@dataclass(frozen=True)
class LpSolution:
    """Primal/dual result.

    Duals follow the Lagrangian ``c@x + dual_eq@(A_eq x - b_eq) + dual_ineq@(A_in x - b_in)
    - dual_lower@(x - lo) + dual_upper@(x - hi)``, so ``dual_ineq``, ``dual_lower``
    and ``dual_upper`` are nonnegative and stationarity reads
    ``c + A_eq.T@dual_eq + A_in.T@dual_ineq - dual_lower + dual_upper = 0``.
    """

    status: Status
    primal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = float("nan")
    dual_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_lower: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_upper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    certificate: np.ndarray | None = None
    engine: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    lo_part = np.where(np.isfinite(lp.lo), lp.lo, 0.0) @ sol.dual_lower
    hi_part = np.where(np.isfinite(lp.hi), lp.hi, 0.0) @ sol.dual_upper
    return float(-sol.dual_eq @ lp.b_eq - sol.dual_ineq @ lp.b_in + lo_part - hi_part)
