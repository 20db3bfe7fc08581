"""Exact solver kernel: LP engines and branch-and-bound."""
from pelletsc.kernel.bnb import LpBackend, MilpSolution, MilpStatus, solve_milp
from pelletsc.kernel.simplex import LpSolution, LpStatus, solve_lp

LP_BACKENDS = ("simplex", "highs")


def get_lp(name: str = "highs"):
    """LP callable ``fn(problem, lb=None, ub=None) -> LpSolution`` by backend name."""
    if name == "simplex":
        return solve_lp
    if name == "highs":
        from pelletsc.kernel.highs import solve_lp_highs
        return solve_lp_highs
    raise ValueError(f"unknown LP backend {name!r}; choose from {LP_BACKENDS}")


__all__ = ["LP_BACKENDS", "LpBackend", "LpSolution", "LpStatus", "MilpSolution", "MilpStatus",
           "get_lp", "solve_lp", "solve_milp"]
