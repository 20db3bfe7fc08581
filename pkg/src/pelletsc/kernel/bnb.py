"""Best-first branch-and-bound over binary columns."""
from __future__ import annotations

import enum
import heapq
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pelletsc.kernel.simplex import LpStatus, solve_lp
from pelletsc.problem import MilpProblem

INT_TOL = 1e-6


class MilpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"  # incumbent known, gap open; reserved for external backends
    INFEASIBLE = "Infeasible"
    LIMIT = "Limit"


@dataclass
class MilpSolution:
    status: MilpStatus
    x: np.ndarray | None
    objective: float
    best_bound: float
    gap: float
    nodes: int
    wall_time: float
    node_log: list = field(default_factory=list)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None

    def write_node_log(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.node_log:
                fh.write(json.dumps(rec) + "\n")


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return (incumbent - bound) / max(1e-10, abs(incumbent))


class LpBackend:
    """LP engine used inside branch-and-bound.

    The default is the in-repo simplex. Any callable with the ``solve_lp``
    signature returning an ``LpSolution`` can be plugged in.
    """

    def __init__(self, fn=solve_lp):
        self.fn = fn

    def __call__(self, problem, lb, ub):
        return self.fn(problem, lb=lb, ub=ub)


def solve_milp(
    problem: MilpProblem,
    gap_tol: float = 1e-9,
    node_limit: int = 100_000,
    time_limit: float = np.inf,
    lp: LpBackend | None = None,
    abs_tol: float = 1e-9,
) -> MilpSolution:
    lp = lp or LpBackend()
    t0 = time.perf_counter()
    lb0, ub0 = problem.lb.copy(), problem.ub.copy()
    bins = np.sort(problem.binaries)
    log: list[dict] = []

    incumbent_x, incumbent = None, np.inf
    heap: list = []
    counter = 0
    root = lp(problem, lb0, ub0)
    if root.status == LpStatus.INFEASIBLE:
        return MilpSolution(MilpStatus.INFEASIBLE, None, np.inf, np.inf, np.inf, 1,
                            time.perf_counter() - t0, [{"node": 0, "status": "infeasible"}])
    if root.status != LpStatus.OPTIMAL:
        # unbounded relaxation or kernel limit: nothing we can certify
        return MilpSolution(MilpStatus.LIMIT, None, np.inf, -np.inf, np.inf, 1,
                            time.perf_counter() - t0, [{"node": 0, "status": root.status.value}])
    heapq.heappush(heap, (root.objective, counter, lb0, ub0, root, 0))
    nodes = 1
    best_bound = root.objective
    status = None

    while heap:
        bound, nid, lb, ub, sol, depth = heapq.heappop(heap)
        best_bound = min(bound, incumbent)
        if relative_gap(incumbent, best_bound) <= gap_tol or incumbent - best_bound <= abs_tol:
            status = MilpStatus.OPTIMAL
            heap.clear()
            break
        if bound >= incumbent - abs_tol:
            continue
        xb = sol.x[bins]
        frac = np.abs(xb - np.round(xb))
        rec = {"node": nid, "depth": depth, "bound": bound, "best_bound": best_bound,
               "incumbent": None if not np.isfinite(incumbent) else incumbent}
        if frac.max(initial=0.0) <= INT_TOL:
            x = sol.x.copy()
            x[bins] = np.round(x[bins])
            incumbent, incumbent_x = sol.objective, x
            rec["event"] = "incumbent"
            log.append(rec)
            continue
        # most fractional; argmax returns the lowest index among ties
        k = int(bins[np.argmax(-np.abs(xb - 0.5))])
        rec["event"] = "branch"
        rec["var"] = k
        log.append(rec)
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[k] = cub[k] = val
            child = lp(problem, clb, cub)
            nodes += 1
            if child.status != LpStatus.OPTIMAL:
                continue
            if child.objective >= incumbent - abs_tol:
                continue
            counter += 1
            heapq.heappush(heap, (child.objective, counter, clb, cub, child, depth + 1))
        if nodes >= node_limit or time.perf_counter() - t0 > time_limit:
            status = MilpStatus.LIMIT
            break

    if status is None:
        # tree exhausted
        status = MilpStatus.OPTIMAL if incumbent_x is not None else MilpStatus.INFEASIBLE
        best_bound = incumbent
    elif status == MilpStatus.LIMIT:
        if heap:
            best_bound = min(best_bound, heap[0][0])
        best_bound = min(best_bound, incumbent)
    gap = relative_gap(incumbent, best_bound) if incumbent_x is not None else np.inf
    return MilpSolution(status, incumbent_x, incumbent, best_bound, gap, nodes,
                        time.perf_counter() - t0, log)
