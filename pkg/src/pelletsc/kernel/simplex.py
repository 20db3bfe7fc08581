"""Bounded-variable revised simplex (two phases, dense basis inverse with eta updates)."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from pelletsc.problem import EQ, GE, LE, MilpProblem

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
BLAND_AFTER = 50
REFACTOR_EVERY = 60

_BASIC, _AT_LB, _AT_UB, _FREE = 0, 1, 2, 3


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class LpSolution:
    status: LpStatus
    objective: float
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    iterations: int
    # Infeasible: row multipliers y with max_{box} y.(Ax+s) < y.b (Farkas).
    # Unbounded: a structural direction of improvement.
    certificate: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


class _Basis:
    """Sparse LU of a reference basis plus a product-form eta file."""

    def __init__(self, A: sp.csc_matrix, head: np.ndarray):
        B = A[:, head].tocsc()
        self.lu = splu(B, permc_spec="COLAMD")
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        z = self.lu.solve(a)
        for r, alpha in self.etas:
            zr = z[r] / alpha[r]
            z -= alpha * zr
            z[r] = zr
        return z

    def btran(self, c: np.ndarray) -> np.ndarray:
        v = c.astype(float).copy()
        for r, alpha in reversed(self.etas):
            v[r] = (v[r] - (v @ alpha - v[r] * alpha[r])) / alpha[r]
        return self.lu.solve(v, trans="T")

    def update(self, r: int, alpha: np.ndarray) -> None:
        self.etas.append((r, alpha.copy()))


class _Tableau:
    def __init__(self, A: sp.csc_matrix, b, c, lb, ub, max_iter):
        m, n = A.shape
        self.m, self.n = m, n
        self.b = b
        self.max_iter = max_iter
        self.iterations = 0
        eye = sp.identity(m, format="csc")
        self.A = sp.hstack([A, eye, eye], format="csc")  # structurals | slacks | artificials
        self.lb = np.concatenate([lb, np.zeros(m), np.zeros(m)])
        self.ub = np.concatenate([ub, np.full(m, np.inf), np.zeros(m)])
        self.c = np.concatenate([c, np.zeros(2 * m)])

    def set_slack_bounds(self, senses):
        m, n = self.m, self.n
        s = slice(n, n + m)
        self.lb[s] = np.where(senses == GE, -np.inf, 0.0)
        self.ub[s] = np.where(senses == LE, np.inf, 0.0)

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        a, e = self.A.indptr[j], self.A.indptr[j + 1]
        col[self.A.indices[a:e]] = self.A.data[a:e]
        return col

    def refactor(self):
        self.basis = _Basis(self.A, self.head)
        self._recompute_basics()

    def _recompute_basics(self):
        xn = self.x.copy()
        xn[self.head] = 0.0
        self.x[self.head] = self.basis.ftran(self.b - self.A @ xn)

    def start(self):
        """Crash basis: slacks where the row is satisfiable, artificials elsewhere."""
        m, n = self.m, self.n
        N = n + 2 * m
        self.x = np.zeros(N)
        self.status = np.full(N, _AT_LB, dtype=np.int8)
        lb, ub = self.lb, self.ub
        for j in range(n):
            if np.isfinite(lb[j]):
                self.x[j], self.status[j] = lb[j], _AT_LB
            elif np.isfinite(ub[j]):
                self.x[j], self.status[j] = ub[j], _AT_UB
            else:
                self.x[j], self.status[j] = 0.0, _FREE
        r = self.b - self.A[:, :n] @ self.x[:n]
        head = []
        for i in range(m):
            s = n + i
            if lb[s] - FEAS_TOL <= r[i] <= ub[s] + FEAS_TOL:
                head.append(s)
                self.x[s] = r[i]
                self.status[s] = _BASIC
            else:
                a = n + m + i
                self.A.data[self.A.indptr[a]] = 1.0 if r[i] >= 0 else -1.0
                self.ub[a] = np.inf
                head.append(a)
                self.x[a] = abs(r[i])
                self.status[a] = _BASIC
                # slack rests at 0, which lies inside its box
                self.x[s] = 0.0
                self.status[s] = _AT_LB if np.isfinite(lb[s]) else _AT_UB
        self.AT = self.A.T.tocsr()
        self.head = np.array(head, dtype=np.int64)
        self.basis = _Basis(self.A, self.head)

    def duals(self, cost):
        return self.basis.btran(cost[self.head])

    def run(self, cost: np.ndarray) -> str:
        """Primal simplex on the current basis; returns 'optimal' | 'unbounded' | 'limit'."""
        degenerate = 0
        bland = False
        fixed = self.lb == self.ub
        while True:
            if self.iterations >= self.max_iter:
                return "limit"
            y = self.duals(cost)
            d = cost - self.AT @ y
            st = self.status
            elig = ((st == _AT_LB) & (d < -OPT_TOL)) | ((st == _AT_UB) & (d > OPT_TOL))
            elig |= (st == _FREE) & (np.abs(d) > OPT_TOL)
            elig &= ~fixed
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return "optimal"
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.basis.ftran(self.column(q))
            delta = -direction * alpha  # change of basics per unit step
            xb = self.x[self.head]
            lbb, ubb = self.lb[self.head], self.ub[self.head]
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            t_flip = self.ub[q] - self.lb[q]
            # Harris pass 1: largest step with bounds relaxed by the feasibility tolerance
            relaxed = np.full(self.m, np.inf)
            relaxed[dec] = (xb[dec] - lbb[dec] + FEAS_TOL) / -delta[dec]
            relaxed[inc] = (ubb[inc] - xb[inc] + FEAS_TOL) / delta[inc]
            t_max = relaxed.min() if self.m else np.inf
            if not np.isfinite(t_max) and not np.isfinite(t_flip):
                self.ray_q, self.ray_dir, self.ray_delta = q, direction, delta
                return "unbounded"
            exact = np.full(self.m, np.inf)
            exact[dec] = (xb[dec] - lbb[dec]) / -delta[dec]
            exact[inc] = (ubb[inc] - xb[inc]) / delta[inc]
            exact = np.maximum(exact, 0.0)
            self.iterations += 1
            if t_flip <= t_max and t_flip <= exact.min(initial=np.inf):
                t = t_flip
                self.x[q] += direction * t
                self.x[self.head] = xb + delta * t
                self.status[q] = _AT_UB if direction > 0 else _AT_LB
            else:
                if bland:
                    t = exact.min()
                    ties = np.flatnonzero(exact <= t + 1e-12)
                    leave = int(ties[np.argmin(self.head[ties])])
                else:
                    # Harris pass 2: biggest pivot among rows blocking within t_max
                    ties = np.flatnonzero(exact <= t_max)
                    leave = int(ties[np.argmax(np.abs(delta[ties]))])
                    t = exact[leave]
                self.x[q] += direction * t
                self.x[self.head] = xb + delta * t
                out = self.head[leave]
                if delta[leave] < 0:
                    self.x[out], self.status[out] = self.lb[out], _AT_LB
                else:
                    self.x[out], self.status[out] = self.ub[out], _AT_UB
                self.status[q] = _BASIC
                self.head[leave] = q
                self.basis.update(leave, alpha)
                if len(self.basis.etas) >= REFACTOR_EVERY:
                    self.refactor()
            if t <= 1e-12:
                degenerate += 1
                if degenerate >= BLAND_AFTER:
                    bland = True
            else:
                degenerate = 0


def solve_lp(
    problem: MilpProblem,
    max_iter: int | None = None,
    lb: np.ndarray | None = None,
    ub: np.ndarray | None = None,
) -> LpSolution:
    """Solve the LP relaxation of ``problem`` (binary markers are ignored).

    ``lb``/``ub`` override the column bounds without copying the problem, which is
    how branch-and-bound fixes binaries.
    """
    lb = problem.lb if lb is None else np.asarray(lb, float)
    ub = problem.ub if ub is None else np.asarray(ub, float)
    m, n = problem.n_rows, problem.n_cols
    A = problem.matrix()
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    def _done(status, x, y, d, it, cert=None, obj=np.nan):
        return LpSolution(status, obj, x, y, d, it, cert)

    if np.any(lb > ub + FEAS_TOL):
        # empty box: certify with a zero row vector (the checker treats it separately)
        return _done(LpStatus.INFEASIBLE, np.full(n, np.nan), np.zeros(m), np.zeros(n), 0,
                     np.zeros(m))

    tab = _Tableau(A, problem.rhs.copy(), problem.c, lb.copy(), ub.copy(), max_iter)
    tab.set_slack_bounds(problem.senses)
    tab.start()
    art = slice(n + m, n + 2 * m)
    arts_in = np.any(tab.ub[art] > 0)
    if arts_in:
        c1 = np.zeros(n + 2 * m)
        c1[art] = 1.0
        res = tab.run(c1)
        if res == "limit":
            return _done(LpStatus.ITERATION_LIMIT, tab.x[:n].copy(), np.zeros(m),
                         np.zeros(n), tab.iterations)
        tab.refactor()
        infeas = tab.x[art].sum()
        scale = 1.0 + np.abs(problem.rhs).max(initial=0.0)
        if infeas > FEAS_TOL * scale:
            y1 = tab.duals(c1)
            return _done(LpStatus.INFEASIBLE, np.full(n, np.nan), np.zeros(m), np.zeros(n),
                         tab.iterations, y1.copy())
        tab.ub[art] = 0.0
        tab.x[art] = np.clip(tab.x[art], 0.0, 0.0)
        tab._recompute_basics()
    cost = tab.c
    res = tab.run(cost)
    if res == "limit":
        return _done(LpStatus.ITERATION_LIMIT, tab.x[:n].copy(), np.zeros(m), np.zeros(n),
                     tab.iterations)
    if res == "unbounded":
        ray = np.zeros(n + 2 * m)
        ray[tab.ray_q] = tab.ray_dir
        ray[tab.head] = tab.ray_delta
        return _done(LpStatus.UNBOUNDED, tab.x[:n].copy(), np.zeros(m), np.zeros(n),
                     tab.iterations, ray[:n].copy(), obj=-np.inf)
    tab.refactor()
    y = tab.duals(cost)
    d = cost - tab.AT @ y
    x = tab.x[:n].copy()
    # snap tiny bound violations from accumulated round-off
    x = np.clip(x, lb, ub)
    obj = float(problem.c @ x) + problem.obj_offset
    return _done(LpStatus.OPTIMAL, x, y, d[:n].copy(), tab.iterations, obj=obj)


def dual_objective(problem: MilpProblem, y: np.ndarray, lb=None, ub=None, tol=1e-9) -> float:
    """Dual value b.y + sum_j min over the column box of (c - A'y)_j x_j.

    Equals the primal optimum at an optimal dual; -inf when y is not dual feasible
    for the column box.
    """
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    d = problem.c - problem.matrix().T @ y
    total = float(problem.rhs @ y) + problem.obj_offset
    for j in range(problem.n_cols):
        if d[j] > tol:
            total += d[j] * lb[j] if np.isfinite(lb[j]) else -np.inf
        elif d[j] < -tol:
            total += d[j] * ub[j] if np.isfinite(ub[j]) else -np.inf
    return total
