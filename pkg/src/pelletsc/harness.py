"""Drivers shared by the command line: one solve, the variant benchmark and the quality study."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from pelletsc.generate import Case
from pelletsc.kernel import LpBackend, MilpStatus, get_lp, solve_milp
from pelletsc.model import (ResidualReport, build_extensive_form, check_solution_feasibility,
                            decode)
from pelletsc.pha import PhaConfig, Termination, pha_solve
from pelletsc.saa import SaaConfig, run_saa
from pelletsc.scenario import derive_seed, sample_scenarios

log = logging.getLogger(__name__)

ALGOS = ("exact", "pha", "pha-hr", "pha-hr-sb", "saa", "hybrid")
PARALLEL = ("none", "scheme1", "scheme2")
STREAM_SOLVE = 4  # scenario sample used when a case ships without explicit scenarios

# benchmark variant name -> (algo, parallel)
VARIANTS = {
    "exact": ("exact", "none"), "pha": ("pha", "none"), "pha-hr": ("pha-hr", "none"),
    "pha-hr-sb": ("pha-hr-sb", "none"), "saa": ("saa", "none"), "hybrid": ("hybrid", "none"),
    "hybrid-pl1": ("hybrid", "scheme1"), "hybrid-pl2": ("hybrid", "scheme2"),
}

# name, ash multiplier, moisture multiplier ("good" quality = lower content)
QUALITY_VARIANTS = (
    ("Base", 1.0, 1.0),
    ("Good ash", 0.7, 1.0),
    ("Bad ash", 1.3, 1.0),
    ("Good moisture", 1.0, 0.7),
    ("Bad moisture", 1.0, 1.3),
)


class UsageError(ValueError):
    pass


@dataclass
class SolveOptions:
    algo: str = "exact"
    parallel: str = "none"
    workers: int | None = None
    seed: int = 0
    gap_tol: float | None = None
    time_limit: float | None = None
    iter_limit: int | None = None
    n_scenarios: int = 6  # only used when the case has no explicit scenarios
    replications: int = 10
    saa_scenarios: int = 20
    eval_scenarios: int = 200
    executor: str = "inline"
    lp_backend: str = "highs"

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise UsageError(f"unknown algorithm {self.algo!r}; choose from {', '.join(ALGOS)}")
        if self.parallel not in PARALLEL:
            raise UsageError(f"unknown parallel scheme {self.parallel!r}")
        if self.parallel != "none" and self.algo not in ("saa", "hybrid"):
            raise UsageError("--parallel requires --algo saa or hybrid")
        if self.workers is not None and self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if self.gap_tol is not None and self.gap_tol <= 0:
            raise UsageError("--gap-tol must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise UsageError("--time-limit must be positive")
        if self.iter_limit is not None and self.iter_limit < 0:
            raise UsageError("--iter-limit must be >= 0")


@dataclass
class SolveOutcome:
    algo: str
    status: str  # optimal | feasible | limit | infeasible
    y: np.ndarray | None
    objective: float
    bound: float | None
    gap: float | None
    iterations: int
    wall_time: float
    residuals: ResidualReport | None
    details: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    scheduler: object = None
    solution: object = field(default=None, repr=False)

    def to_dict(self, mask_timing: bool = False) -> dict:
        d = {"algo": self.algo, "status": self.status,
             "y": None if self.y is None else np.asarray(self.y).astype(int).tolist(),
             "objective": self.objective, "bound": self.bound, "gap": self.gap,
             "iterations": self.iterations,
             "residuals": None if self.residuals is None else self.residuals.to_dict(),
             "details": self.details}
        if not mask_timing:
            d["wall_time"] = self.wall_time
        return d


def case_scenarios(case: Case, opts: SolveOptions) -> list:
    if case.scenarios:
        return list(case.scenarios)
    return sample_scenarios(case.spec, opts.n_scenarios, derive_seed(opts.seed, STREAM_SOLVE))


def _solve_exact(case, opts, scenarios, t0) -> SolveOutcome:
    prob = build_extensive_form(case.instance, scenarios)
    res = solve_milp(prob, gap_tol=opts.gap_tol if opts.gap_tol is not None else 1e-9,
                     time_limit=opts.time_limit or np.inf,
                     node_limit=opts.iter_limit if opts.iter_limit else 100_000,
                     lp=LpBackend(get_lp(opts.lp_backend)))
    if res.status == MilpStatus.INFEASIBLE:
        return SolveOutcome("exact", "infeasible", None, float("nan"), None, None, res.nodes,
                            time.perf_counter() - t0, None)
    if not res.has_incumbent:
        return SolveOutcome("exact", "limit", None, float("nan"), res.best_bound, None, res.nodes,
                            time.perf_counter() - t0, None)
    sol = decode(prob, res.x)
    rep = check_solution_feasibility(case.instance, scenarios, sol)
    status = "optimal" if res.status == MilpStatus.OPTIMAL else "limit"
    return SolveOutcome("exact", status, np.round(sol.y).astype(int), res.objective, res.best_bound,
                        res.gap, res.nodes, time.perf_counter() - t0, rep,
                        details={"nodes": res.nodes}, trace=res.node_log, solution=sol)


def _solve_pha(case, opts, scenarios, t0) -> SolveOutcome:
    kw = {"lp_backend": opts.lp_backend, "seed": opts.seed}
    if opts.gap_tol is not None:
        kw["gap_tol"] = opts.gap_tol
    if opts.time_limit is not None:
        kw["time_limit"] = opts.time_limit
    if opts.iter_limit is not None:
        kw["max_iter"] = opts.iter_limit
    res = pha_solve(case.instance, scenarios, PhaConfig.variant(opts.algo, **kw))
    rep = check_solution_feasibility(case.instance, scenarios, res.solution)
    limited = res.termination in (Termination.ITER_LIMIT, Termination.TIME_LIMIT)
    return SolveOutcome(opts.algo, "limit" if limited else "feasible", res.y, res.objective,
                        res.bound, res.gap, res.iterations, time.perf_counter() - t0, rep,
                        details=res.summary(), trace=res.trace, solution=res.solution)


def _solve_saa(case, opts, t0) -> SolveOutcome:
    inner = "exact" if opts.algo == "saa" else "pha_hr_sb"
    pha = None
    if inner != "exact" and (opts.gap_tol or opts.time_limit or opts.iter_limit is not None):
        kw = {"lp_backend": opts.lp_backend}
        if opts.gap_tol is not None:
            kw["gap_tol"] = opts.gap_tol
        if opts.time_limit is not None:
            kw["time_limit"] = opts.time_limit
        if opts.iter_limit is not None:
            kw["max_iter"] = opts.iter_limit
        pha = PhaConfig.variant("pha-hr-sb", **kw)
    cfg = SaaConfig(n_replications=opts.replications, n_scenarios=opts.saa_scenarios,
                    n_eval=max(opts.eval_scenarios, opts.saa_scenarios), inner=inner,
                    master_seed=opts.seed,
                    scheme="serial" if opts.parallel == "none" else opts.parallel,
                    workers=opts.workers, executor=opts.executor, lp_backend=opts.lp_backend,
                    pha=pha)
    report, trace = run_saa(case.instance, case.spec, cfg)
    rep = check_solution_feasibility(case.instance, report.eval_sample, report.solution)
    rel_gap = report.gap / max(1e-10, abs(report.ub))
    iters = [r.iterations for r in report.replications if r.ok]
    return SolveOutcome(opts.algo, "partial" if report.n_failed else "feasible",
                        np.asarray(report.y_star), report.ub, report.lb, rel_gap,
                        int(round(float(np.mean(iters)))) if iters else 0,
                        time.perf_counter() - t0, rep,
                        details={"saa": report.to_dict(), "replications": cfg.n_replications},
                        scheduler=trace, solution=report.solution)


def solve_case(case: Case, opts: SolveOptions) -> SolveOutcome:
    t0 = time.perf_counter()
    if opts.algo in ("saa", "hybrid"):
        return _solve_saa(case, opts, t0)
    scenarios = case_scenarios(case, opts)
    if opts.algo == "exact":
        return _solve_exact(case, opts, scenarios, t0)
    return _solve_pha(case, opts, scenarios, t0)


# -- benchmark -----------------------------------------------------------------

RUN_COLUMNS = ["instance", "variant", "seed", "status", "objective", "bound", "gap",
               "iterations", "time_s", "residuals_ok"]


def run_benchmark(cases: Sequence[Case], variants: Sequence[str], seeds: Sequence[int],
                  out_dir, base: SolveOptions | None = None) -> tuple[list, dict]:
    """Every (case, variant, seed); writes runs.csv, summary.csv and scheduler Gantt CSVs."""
    if not variants:
        raise UsageError("empty variant list")
    if not cases:
        raise UsageError("no instances to benchmark")
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise UsageError(f"unknown variant(s) {bad}; choose from {', '.join(VARIANTS)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = base or SolveOptions()
    rows = []
    for case in cases:
        for v in variants:
            algo, par = VARIANTS[v]
            for seed in seeds:
                opts = SolveOptions(**{**base.__dict__, "algo": algo, "parallel": par, "seed": seed})
                row = {"instance": case.name, "variant": v, "seed": seed}
                try:
                    res = solve_case(case, opts)
                    row.update(status=res.status, objective=res.objective, bound=res.bound,
                               gap=res.gap, iterations=res.iterations, time_s=res.wall_time,
                               residuals_ok=bool(res.residuals and res.residuals.passed))
                    if res.scheduler is not None:
                        res.scheduler.write_gantt_csv(out / f"gantt_{case.name}_{v}_s{seed}.csv")
                except Exception as exc:  # failure marker, keep going
                    log.error("%s / %s / seed %d failed: %s", case.name, v, seed, exc)
                    row.update(status=f"failed: {type(exc).__name__}: {exc}")
                rows.append(row)
                log.info("%s %s seed=%d -> %s", case.name, v, seed, row.get("status"))
    summary = summarize(rows, variants)
    write_rows(out / "runs.csv", rows, RUN_COLUMNS)
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["metric"] + list(variants))
        for metric in ("time_s", "gap", "iterations", "n_runs"):
            wr.writerow([f"avg_{metric}" if metric != "n_runs" else metric]
                        + [summary[v][metric] for v in variants])
    return rows, summary


def summarize(rows, variants) -> dict:
    out = {}
    for v in variants:
        ok = [r for r in rows if r["variant"] == v and "objective" in r]
        out[v] = {
            "time_s": float(np.mean([r["time_s"] for r in ok])) if ok else float("nan"),
            "gap": float(np.mean([r["gap"] for r in ok if r["gap"] is not None])) if ok else float("nan"),
            "iterations": float(np.mean([r["iterations"] for r in ok])) if ok else float("nan"),
            "n_runs": len(ok),
        }
    return out


def write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: r.get(k, "") for k in columns})


# -- quality study -------------------------------------------------------------

QUALITY_COLUMNS = ["variant", "ash_mult", "moist_mult", "depots_open", "expected_cost",
                   "storage_supply", "storage_depot", "storage_total", "cost_delta_pct",
                   "storage_supply_delta_pct", "storage_depot_delta_pct", "storage_delta_pct",
                   "depots_delta", "residuals_ok"]


def _pct(v, base):
    return 100.0 * (v - base) / base if base else float("nan")


def expected_storage(solution, scenarios) -> tuple[float, float]:
    """Probability-weighted tons held in supplier and depot storage, summed over periods."""
    sup = sum(sc.probability * float(np.sum(v["H1"])) for sc, v in zip(scenarios, solution.second))
    dep = sum(sc.probability * float(np.sum(v["H2"])) for sc, v in zip(scenarios, solution.second))
    return sup, dep


def run_quality_study(case: Case, seed: int = 0, n_scenarios: int = 6,
                      lp_backend: str = "highs") -> list[dict]:
    """Base plus the four +/-30% quality variants on common random numbers, solved exactly."""
    rows = []
    sample_seed = derive_seed(seed, STREAM_SOLVE)
    opts = SolveOptions(lp_backend=lp_backend)
    for name, a, m in QUALITY_VARIANTS:
        spec = case.spec.with_quality(a, m)
        scenarios = sample_scenarios(spec, n_scenarios, sample_seed)
        res = _solve_exact(Case(case.instance, spec, scenarios, case.name), opts, scenarios,
                           time.perf_counter())
        if res.solution is None:
            raise RuntimeError(f"quality variant {name!r}: extensive form ended {res.status}")
        sup, dep = expected_storage(res.solution, scenarios)
        rows.append({"variant": name, "ash_mult": a, "moist_mult": m,
                     "depots_open": int(np.sum(res.y)), "expected_cost": res.objective,
                     "storage_supply": sup, "storage_depot": dep, "storage_total": sup + dep,
                     "residuals_ok": res.residuals.passed})
    base = rows[0]
    for r in rows:
        r["cost_delta_pct"] = _pct(r["expected_cost"], base["expected_cost"])
        r["storage_supply_delta_pct"] = _pct(r["storage_supply"], base["storage_supply"])
        r["storage_depot_delta_pct"] = _pct(r["storage_depot"], base["storage_depot"])
        r["storage_delta_pct"] = _pct(r["storage_total"], base["storage_total"])
        r["depots_delta"] = r["depots_open"] - base["depots_open"]
    return rows


def quality_direction(rows: list[dict], rel_tol: float = 1e-6) -> dict:
    """Whether improved quality never costs more and degraded quality never costs less."""
    base = next(r for r in rows if r["variant"] == "Base")["expected_cost"]
    tol = rel_tol * max(1.0, abs(base))
    out = {}
    for r in rows:
        if r["variant"] == "Base":
            continue
        improved = min(r["ash_mult"], r["moist_mult"]) < 1.0
        out[r["variant"]] = (r["expected_cost"] <= base + tol) if improved else (r["expected_cost"] >= base - tol)
    return out
