"""Sample average approximation with an exact or progressive-hedging inner solver.

Estimators (M successful replications with optimal values v_m):

    LB    = mean(v_m)                      SE_LB = sd(v_m) / sqrt(M)
    UB    = min_k mean_n F(Y_k, xi_n)      SE_UB = sd_n F(Y*, xi_n) / sqrt(N')
    gap   = UB - LB                        var   = SE_LB^2 + SE_UB^2

where every distinct candidate Y_k is evaluated on one shared evaluation
sample of N' scenarios drawn from the ``eval`` stream.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from pelletsc import sched
from pelletsc.kernel import LpBackend, MilpStatus, get_lp, solve_milp
from pelletsc.model import FirstStageDecision, Instance, ScenarioEvaluator, build_extensive_form
from pelletsc.pha import PhaConfig, pha_solve
from pelletsc.scenario import (STREAM_EVAL, STREAM_REPLICATION, ScenarioModelSpec, derive_seed,
                               sample_scenarios)

log = logging.getLogger(__name__)

INNER_SOLVERS = ("exact", "pha", "pha_hr", "pha_hr_sb")


def normalize_inner(name: str) -> str:
    key = name.replace("-", "_")
    if key not in INNER_SOLVERS:
        raise ValueError(f"unknown inner solver {name!r}; expected one of {INNER_SOLVERS}")
    return key


@dataclass
class SaaConfig:
    n_replications: int = 10
    n_scenarios: int = 20
    n_eval: int = 200
    inner: str = "exact"
    master_seed: int = 0
    scheme: str = "serial"
    workers: int | None = None
    executor: str = "inline"
    lp_backend: str = "highs"
    pha: PhaConfig | None = None  # overrides the preset for PHA inner solvers

    def __post_init__(self):
        self.inner = normalize_inner(self.inner)
        if self.n_replications < 1 or self.n_scenarios < 1:
            raise ValueError("need M >= 1 and N >= 1")
        if self.n_eval < self.n_scenarios:
            raise ValueError("evaluation sample N' must be at least N")
        if self.scheme not in sched.SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")

    def inner_config(self) -> PhaConfig | None:
        if self.inner == "exact":
            return None
        if self.pha is not None:
            return self.pha
        return PhaConfig.variant(self.inner, lp_backend=self.lp_backend)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pha"] = None if self.pha is None else asdict(self.pha)
        return d


@dataclass
class ReplicationResult:
    index: int
    seed: tuple
    objective: float = float("nan")
    y: list = field(default_factory=list)
    iterations: int = 0
    termination: str = ""
    wall_time: float = 0.0
    ok: bool = True
    error: str = ""

    def to_dict(self, mask_timing: bool = False) -> dict:
        d = asdict(self)
        d["seed"] = list(self.seed)
        if mask_timing:
            d.pop("wall_time")
        return d


def replication_seed(master_seed: int, index: int) -> tuple:
    return derive_seed(master_seed, STREAM_REPLICATION, index)


def evaluation_seed(master_seed: int) -> tuple:
    return derive_seed(master_seed, STREAM_EVAL, 0)


def solve_replication(inst: Instance, spec: ScenarioModelSpec, n_scenarios: int, index: int,
                      inner: str = "exact", master_seed: int = 0,
                      pha_config: PhaConfig | None = None,
                      lp_backend: str = "highs") -> ReplicationResult:
    """Sample replication ``index`` and solve it; a pure function of its arguments."""
    inner = normalize_inner(inner)
    seed = replication_seed(master_seed, index)
    t0 = time.perf_counter()
    out = ReplicationResult(index=index, seed=seed)
    try:
        scenarios = sample_scenarios(spec, n_scenarios, seed)
        if inner == "exact":
            prob = build_extensive_form(inst, scenarios)
            res = solve_milp(prob, lp=LpBackend(get_lp(lp_backend)))
            if res.status != MilpStatus.OPTIMAL:
                raise RuntimeError(f"extensive form ended with status {res.status.value}")
            out.objective = float(res.objective)
            out.y = np.round(res.x[prob.layout.y]).astype(int).tolist()
            out.iterations = res.nodes
            out.termination = res.status.value
            out.wall_time = time.perf_counter() - t0
            return out
        cfg = pha_config or PhaConfig.variant(inner, lp_backend=lp_backend)
        res = pha_solve(inst, scenarios, cfg)
        out.objective = float(res.objective)
        out.y = np.asarray(res.y, int).tolist()
        out.iterations = res.iterations
        out.termination = res.termination.value
    except Exception as exc:
        out.ok = False
        out.error = f"{type(exc).__name__}: {exc}"
        log.warning("replication %d failed: %s", index, out.error)
    out.wall_time = time.perf_counter() - t0
    return out


def _replication_task(inst, spec, n_scenarios, inner, master_seed, pha_config, lp_backend, task):
    return solve_replication(inst, spec, n_scenarios, task.index, inner, master_seed,
                             pha_config, lp_backend)


@dataclass
class Candidate:
    y: list
    ub: float
    se: float
    replications: list

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SaaReport:
    config: dict
    replications: list
    lb: float
    se_lb: float
    ub: float
    se_ub: float
    gap: float
    gap_var: float
    y_star: list
    candidates: list
    eval_seed: list
    n_failed: int
    status: str
    se_lb_defined: bool = True
    timing: dict = field(default_factory=dict)
    # decoded plan of Y* on the evaluation sample; not serialized
    solution: object = field(default=None, repr=False)
    eval_sample: list = field(default=None, repr=False)

    _SCALARS = ("lb", "se_lb", "ub", "se_ub", "gap", "gap_var", "y_star", "eval_seed",
                "n_failed", "status", "se_lb_defined")

    def to_dict(self, mask_timing: bool = False) -> dict:
        d = {k: getattr(self, k) for k in self._SCALARS}
        d["config"] = dict(self.config)
        d["timing"] = dict(self.timing)
        d["replications"] = [r.to_dict(mask_timing) for r in self.replications]
        d["candidates"] = [c.to_dict() for c in self.candidates]
        if mask_timing:
            d.pop("timing")
            for k in ("scheme", "workers", "executor"):
                d["config"].pop(k, None)
        return d

    def to_json(self, mask_timing: bool = False) -> str:
        return json.dumps(self.to_dict(mask_timing), indent=2, sort_keys=True)

    def write_json(self, path, mask_timing: bool = False) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json(mask_timing))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["replication", "seed", "objective", "n_open", "iterations",
                         "termination", "wall_time", "ok"])
            for r in self.replications:
                wr.writerow([r.index, "-".join(map(str, r.seed)), repr(r.objective),
                             int(np.sum(r.y)) if r.ok else "", r.iterations, r.termination,
                             f"{r.wall_time:.6f}", int(r.ok)])


def estimate_bounds(results, inst: Instance, spec: ScenarioModelSpec, n_eval: int,
                    master_seed: int = 0, lp_backend: str = "highs",
                    config: dict | None = None) -> SaaReport:
    """Statistical bounds from replication results (see the module docstring)."""
    results = sorted(results, key=lambda r: r.index)
    ok = [r for r in results if r.ok]
    if not ok:
        raise ValueError("no successful replication to estimate bounds from")
    v = np.array([r.objective for r in ok])
    M = v.size
    lb = float(np.mean(v))
    se_lb = float(np.std(v, ddof=1) / np.sqrt(M)) if M > 1 else 0.0

    eval_seed = evaluation_seed(master_seed)
    sample = sample_scenarios(spec, n_eval, eval_seed)
    evaluator = ScenarioEvaluator(inst, sample, get_lp(lp_backend))
    groups: dict = {}
    for r in ok:
        groups.setdefault(tuple(np.ravel(r.y).tolist()), []).append(r.index)
    cands, sols = [], []
    for key in sorted(groups):
        ev = evaluator.evaluate(FirstStageDecision(np.reshape(key, (inst.nC, inst.nJ))))
        totals = ev.first_stage_cost + ev.scenario_costs
        se = float(np.std(totals, ddof=1) / np.sqrt(totals.size)) if totals.size > 1 else 0.0
        cands.append(Candidate(np.asarray(ev.y).tolist(), float(ev.expected_cost), se, groups[key]))
        sols.append(ev.solution)
    k_best = min(range(len(cands)), key=lambda k: cands[k].ub)  # lowest key among ties
    best = cands[k_best]
    failed = len(results) - M
    if failed:
        log.warning("%d replication(s) failed and are excluded from the lower bound", failed)
    return SaaReport(
        config=dict(config or {}), replications=results, lb=lb, se_lb=se_lb, ub=best.ub,
        se_ub=best.se, gap=best.ub - lb, gap_var=se_lb ** 2 + best.se ** 2, y_star=best.y,
        candidates=cands, eval_seed=list(eval_seed), n_failed=failed,
        status="partial" if failed else "ok", se_lb_defined=M > 1,
        solution=sols[k_best], eval_sample=sample,
    )


def replication_tasks(spec: ScenarioModelSpec, config: SaaConfig) -> list:
    """Task descriptors scored by the total supply of each replication's sample."""
    tasks = []
    for m in range(config.n_replications):
        seed = replication_seed(config.master_seed, m)
        score = sched.score_replication(sample_scenarios(spec, config.n_scenarios, seed))
        tasks.append(sched.TaskDescriptor(index=m, score=score, seed=seed))
    return tasks


def run_saa(inst: Instance, spec: ScenarioModelSpec, config: SaaConfig | None = None):
    """Dispatch replications through the configured scheme and aggregate.

    Returns (SaaReport, SchedulerTrace).
    """
    config = config or SaaConfig()
    t0 = time.perf_counter()
    tasks = replication_tasks(spec, config)
    fn = functools.partial(_replication_task, inst, spec, config.n_scenarios, config.inner,
                           config.master_seed, config.inner_config(), config.lp_backend)
    results, errors, trace = sched.dispatch(tasks, fn, config.scheme, config.workers,
                                            config.executor)
    reps = []
    for t in tasks:
        if t.index in results:
            reps.append(results[t.index])
        else:
            reps.append(ReplicationResult(index=t.index, seed=t.seed, ok=False,
                                          error=errors.get(t.index, "missing")))
    t1 = time.perf_counter()
    report = estimate_bounds(reps, inst, spec, config.n_eval, config.master_seed,
                             config.lp_backend, config.to_dict())
    report.timing = {"scheme": trace.scheme, "workers": trace.workers,
                     "makespan": trace.makespan, "busy": trace.busy(), "idle": trace.idle(),
                     "replication_phase": t1 - t0, "evaluation_phase": time.perf_counter() - t1,
                     "total": time.perf_counter() - t0}
    return report, trace
