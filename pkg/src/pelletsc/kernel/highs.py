"""LP backend delegating to HiGHS through ``scipy.optimize.linprog``."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from pelletsc.kernel.simplex import LpSolution, LpStatus
from pelletsc.problem import EQ, GE, LE, MilpProblem

_STATUS = {0: LpStatus.OPTIMAL, 1: LpStatus.ITERATION_LIMIT, 2: LpStatus.INFEASIBLE,
           3: LpStatus.UNBOUNDED}


class _Split:
    def __init__(self, problem: MilpProblem):
        A = problem.matrix().tocsr()
        s = problem.senses
        self.le = np.flatnonzero(s == LE)
        self.ge = np.flatnonzero(s == GE)
        self.eq = np.flatnonzero(s == EQ)
        ub_rows = np.concatenate([self.le, self.ge])
        sign = np.concatenate([np.ones(self.le.size), -np.ones(self.ge.size)])
        self.A_ub = sp.diags(sign) @ A[ub_rows] if ub_rows.size else None
        self.b_ub = sign * problem.rhs[ub_rows] if ub_rows.size else None
        self.A_eq = A[self.eq] if self.eq.size else None
        self.b_eq = problem.rhs[self.eq] if self.eq.size else None
        self.AT = A.T.tocsr()


def solve_lp_highs(problem: MilpProblem, lb=None, ub=None, max_iter: int | None = None) -> LpSolution:
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    split = getattr(problem, "_highs_split", None)
    if split is None:
        split = _Split(problem)
        problem._highs_split = split
    n, m = problem.n_cols, problem.n_rows
    bounds = np.column_stack([np.where(np.isinf(lb), None, lb), np.where(np.isinf(ub), None, ub)])
    opts = {"presolve": True}
    if max_iter is not None:
        opts["maxiter"] = max_iter
    res = linprog(problem.c, A_ub=split.A_ub, b_ub=split.b_ub, A_eq=split.A_eq, b_eq=split.b_eq,
                  bounds=bounds, method="highs", options=opts)
    status = _STATUS.get(res.status, LpStatus.ITERATION_LIMIT)
    if status != LpStatus.OPTIMAL:
        obj = -np.inf if status == LpStatus.UNBOUNDED else np.nan
        return LpSolution(status, obj, np.full(n, np.nan), np.zeros(m), np.zeros(n), int(res.nit or 0))
    y = np.zeros(m)
    nle = split.le.size
    if split.A_ub is not None:
        mu = res.ineqlin.marginals
        y[split.le] = mu[:nle]
        y[split.ge] = -mu[nle:]
    if split.A_eq is not None:
        y[split.eq] = res.eqlin.marginals
    x = np.clip(res.x, lb, ub)
    d = problem.c - split.AT @ y
    return LpSolution(LpStatus.OPTIMAL, float(problem.c @ x) + problem.obj_offset, x, y, d,
                      int(res.nit or 0))
