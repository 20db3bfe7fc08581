"""Independent checks of solver claims, computed from problem data only."""
from __future__ import annotations

import numpy as np

from pelletsc.problem import EQ, GE, LE, MilpProblem


def primal_residual(problem: MilpProblem, x: np.ndarray, lb=None, ub=None) -> float:
    """Largest violation of rows or column bounds at ``x``."""
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    act = problem.row_activity(x)
    r = act - problem.rhs
    viol = np.where(
        problem.senses == LE, np.maximum(r, 0), np.where(problem.senses == GE, np.maximum(-r, 0), np.abs(r))
    )
    vb = np.maximum(np.maximum(lb - x, 0), np.maximum(x - ub, 0))
    return float(max(viol.max(initial=0.0), vb.max(initial=0.0)))


def dual_residual(problem: MilpProblem, y: np.ndarray, d: np.ndarray, x: np.ndarray,
                  lb=None, ub=None, tol: float = 1e-7) -> float:
    """Sign violations of row duals and of reduced costs relative to where x sits in its box."""
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    worst = 0.0
    s = problem.senses
    worst = max(worst, float(np.maximum(y[s == LE], 0).max(initial=0.0)))
    worst = max(worst, float(np.maximum(-y[s == GE], 0).max(initial=0.0)))
    d_true = problem.c - problem.matrix().T @ y
    worst = max(worst, float(np.abs(d_true - d).max(initial=0.0)))
    at_lb = np.abs(x - lb) <= tol
    at_ub = np.abs(x - ub) <= tol
    # d must be >= 0 unless x can rest at ub, <= 0 unless x can rest at lb
    worst = max(worst, float(np.maximum(-d_true[~at_ub], 0).max(initial=0.0)))
    worst = max(worst, float(np.maximum(d_true[~at_lb], 0).max(initial=0.0)))
    return worst


def check_farkas(problem: MilpProblem, y: np.ndarray, lb=None, ub=None, tol: float = 1e-7) -> bool:
    """True iff y proves {A x + s = b, x in box, s in sense box} is empty.

    With s >= 0 on <= rows, s <= 0 on >= rows, s = 0 on = rows, the system is
    empty when max over the boxes of y.(A x + s) is strictly below y.b.
    """
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    if np.any(lb > ub + tol):
        return True
    s = problem.senses
    if np.any(y[s == LE] > tol) or np.any(y[s == GE] < -tol):
        return False  # slack term unbounded above
    g = problem.matrix().T @ y
    hi = 0.0
    for j, gj in enumerate(g):
        if gj > tol:
            if not np.isfinite(ub[j]):
                return False
            hi += gj * ub[j]
        elif gj < -tol:
            if not np.isfinite(lb[j]):
                return False
            hi += gj * lb[j]
        else:
            hi += gj * (ub[j] if np.isfinite(ub[j]) else lb[j] if np.isfinite(lb[j]) else 0.0)
    return hi < float(problem.rhs @ y) - tol * (1 + np.abs(y).sum())


def check_unbounded_ray(problem: MilpProblem, x: np.ndarray, ray: np.ndarray,
                        lb=None, ub=None, tol: float = 1e-7) -> bool:
    """True iff x is feasible and x + t*ray stays feasible with c.ray < 0 for all t >= 0."""
    lb = problem.lb if lb is None else lb
    ub = problem.ub if ub is None else ub
    if primal_residual(problem, x, lb, ub) > tol * (1 + np.abs(x).max(initial=0.0)):
        return False
    if problem.c @ ray >= -tol:
        return False
    ad = problem.row_activity(ray)
    s = problem.senses
    if np.any(ad[s == LE] > tol) or np.any(ad[s == GE] < -tol) or np.any(np.abs(ad[s == EQ]) > tol):
        return False
    if np.any((ray > tol) & np.isfinite(ub)) or np.any((ray < -tol) & np.isfinite(lb)):
        return False
    return True
