"""Progressive hedging over the depot-opening decisions, with optional variable
fixing / penalty growth (HR) and scenario bundling (SB)."""
from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from pelletsc.kernel import LpBackend, MilpStatus, get_lp, solve_milp
from pelletsc.model import (FirstStageDecision, Instance, Scenario, ScenarioEvaluator,
                            build_bundle_problem, pha_objective_terms)
from pelletsc.scenario import Bundle, bundle_scenarios, make_bundles

log = logging.getLogger(__name__)

CENTERING_TOL = 1e-9


class PhaError(RuntimeError):
    pass


class Termination(str, enum.Enum):
    CONTINUE = "Continue"
    GAP_MET = "GapMet"
    CONSENSUS_MET = "ConsensusMet"
    ITER_LIMIT = "IterLimit"
    TIME_LIMIT = "TimeLimit"


@dataclass
class PhaConfig:
    rho: float | None = None  # None: max(1, mean invest cost)
    rho_growth: float = 1.0
    rho_max: float | None = None  # None: 100 * initial rho
    consensus_tol: float = 1e-6
    gap_tol: float = 0.01
    max_iter: int = 50
    time_limit: float = 1800.0
    k_fix: int = 3
    enable_hr: bool = False
    enable_sb: bool = False
    n_bundles: int | None = None  # None with SB: ceil(|Omega| / 2)
    bundle_method: str = "round_robin"
    seed: int = 0
    sub_gap: float = 1e-9
    lp_backend: str = "highs"
    bound_solves: bool = True  # extra w-only solves per iteration for a valid bound
    check_invariants: bool = True

    def __post_init__(self):
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.rho_growth < 1:
            raise ValueError("rho_growth must be >= 1")
        if self.consensus_tol <= 0 or self.gap_tol <= 0 or self.time_limit <= 0:
            raise ValueError("tolerances and limits must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.k_fix < 1:
            raise ValueError("k_fix must be >= 1")

    @classmethod
    def variant(cls, name: str, **kw) -> "PhaConfig":
        """Preset for ``pha``, ``pha-hr`` or ``pha-hr-sb``."""
        name = name.replace("_", "-")
        if name == "pha":
            base = dict()
        elif name == "pha-hr":
            base = dict(enable_hr=True, rho_growth=1.25)
        elif name == "pha-hr-sb":
            base = dict(enable_hr=True, rho_growth=1.25, enable_sb=True)
        else:
            raise ValueError(f"unknown PHA variant {name!r}")
        base.update(kw)
        return cls(**base)


@dataclass
class PhaState:
    iteration: int
    probs: np.ndarray  # (S,) subproblem masses
    Y: np.ndarray  # (S, C*J) proposals
    ybar: np.ndarray  # (C*J,)
    w: np.ndarray  # (S, C*J)
    rho: float
    rho0: float
    fixed: dict = field(default_factory=dict)  # coordinate -> value
    last_fixed: list = field(default_factory=list)  # coordinates fixed by the latest update
    streak: np.ndarray = None
    sub_obj: np.ndarray = None  # subproblem objectives incl. PH terms
    bound: float = -np.inf  # best valid Lagrangian bound so far
    estimate: float = -np.inf  # subproblem objectives minus proximal terms
    ws_bound: float = -np.inf
    incumbent: float = np.inf
    incumbent_y: np.ndarray = None
    started: float = 0.0
    elapsed: float = 0.0
    trace: list = field(default_factory=list)

    def consensus_residual(self) -> float:
        return float(self.probs @ np.abs(self.Y - self.ybar).sum(axis=1))

    def centering(self) -> float:
        return float(np.abs(self.probs @ self.w).max(initial=0.0))


@dataclass
class PhaResult:
    y: np.ndarray
    objective: float
    bound: float
    gap: float
    ws_bound: float
    ws_gap: float
    iterations: int
    termination: Termination
    trace: list
    wall_time: float
    n_subproblems: int
    solution: object = None

    def summary(self) -> dict:
        return {"y": self.y.tolist(), "objective": self.objective, "bound": self.bound,
                "gap": self.gap, "ws_bound": self.ws_bound, "ws_gap": self.ws_gap,
                "iterations": self.iterations, "termination": self.termination.value,
                "wall_time": self.wall_time, "n_subproblems": self.n_subproblems}

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec) + "\n")


class _Subproblems:
    """Bundle problems built once; each iteration only rewrites Y costs and bounds."""

    def __init__(self, inst: Instance, scenarios: Sequence[Scenario], bundles: Sequence[Bundle],
                 config: PhaConfig):
        self.bundles = list(bundles)
        self.probs = np.array([b.mass for b in bundles])
        self.problems = [build_bundle_problem(inst, scenarios, b.members) for b in bundles]
        self.ycols = [p.layout.y.ravel() for p in self.problems]
        self.base_cy = [p.c[yc].copy() for p, yc in zip(self.problems, self.ycols)]
        self.lp = LpBackend(get_lp(config.lp_backend))
        self.gap = config.sub_gap

    def solve(self, s: int, w=None, ybar=None, rho=0.0, fixed=None):
        prob = self.problems[s]
        yc = self.ycols[s]
        if w is None:
            prob.c[yc] = self.base_cy[s]
            prob.obj_offset = 0.0
        else:
            coef, const = pha_objective_terms(self.base_cy[s], w, ybar, rho)
            prob.c[yc] = coef
            prob.obj_offset = const
        lb, ub = prob.lb.copy(), prob.ub.copy()
        for k, v in (fixed or {}).items():
            lb[yc[k]] = ub[yc[k]] = v
        res = solve_milp(prob.with_bounds(lb, ub), gap_tol=self.gap, lp=self.lp)
        if res.status == MilpStatus.INFEASIBLE:
            return None
        if not res.has_incumbent:
            raise PhaError(f"subproblem {s} (scenarios {self.bundles[s].members}): "
                           f"no incumbent, status {res.status.value}")
        y = np.round(res.x[yc])
        prox = 0.0
        if w is not None:
            prox = 0.5 * rho * float(np.sum(y - 2 * y * ybar + ybar ** 2))
        return y, res.objective, prox


def consensus(Y: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Probability-weighted average of the proposals (rows of ``Y``)."""
    return np.asarray(probs, float) @ np.asarray(Y, float)


def update_multipliers(w: np.ndarray, Y: np.ndarray, ybar: np.ndarray, rho: float) -> np.ndarray:
    """w_s <- w_s + rho (Y_s - ybar); with w = 0 this is the initialization."""
    return np.asarray(w, float) + rho * (np.asarray(Y, float) - ybar)


def default_rho(inst: Instance) -> float:
    return max(1.0, float(np.mean(np.abs(inst.invest_cost))))


def round_consensus(ybar: np.ndarray, n_cap: int, n_sites: int, threshold: float = 0.5) -> np.ndarray:
    """Open coordinates with ybar >= threshold in descending order, one size per site."""
    flat = ybar.ravel()
    order = sorted(range(flat.size), key=lambda k: (-flat[k], k))
    y = np.zeros(flat.size)
    used = set()
    for k in order:
        if flat[k] < threshold:
            break
        j = k % n_sites
        if j in used:
            continue
        y[k] = 1.0
        used.add(j)
    return y.reshape(n_cap, n_sites)


class ProgressiveHedging:
    def __init__(self, inst: Instance, scenarios: Sequence[Scenario], config: PhaConfig,
                 bundles: Sequence[Bundle] | None = None, evaluator: ScenarioEvaluator | None = None):
        self.inst = inst
        self.scenarios = list(scenarios)
        self.config = config
        if bundles is None:
            if config.enable_sb:
                nb = config.n_bundles or max(1, int(np.ceil(len(scenarios) / 2)))
                bundles = bundle_scenarios(self.scenarios, nb, config.bundle_method, config.seed)
            else:
                bundles = make_bundles(self.scenarios, [[k] for k in range(len(scenarios))])
        self.subs = _Subproblems(inst, self.scenarios, bundles, config)
        self.evaluator = evaluator or ScenarioEvaluator(inst, self.scenarios, get_lp(config.lp_backend))
        self.shape = (inst.nC, inst.nJ)

    # -- incumbent handling --------------------------------------------------
    def _consider(self, state: PhaState, y: np.ndarray) -> None:
        dec = FirstStageDecision(y.reshape(self.shape))
        ev = self.evaluator.evaluate(dec)
        if ev.expected_cost < state.incumbent - 1e-9:
            state.incumbent = ev.expected_cost
            state.incumbent_y = dec.y.ravel().astype(float)

    def _consider_all(self, state: PhaState) -> None:
        self._consider(state, self._candidate(state))
        if self.config.enable_hr:
            # every subproblem proposal is a feasible opening plan; try each distinct one
            for y in np.unique(state.Y, axis=0):
                self._consider(state, y)

    def _candidate(self, state: PhaState) -> np.ndarray:
        if state.consensus_residual() <= self.config.consensus_tol:
            return state.Y[0].copy()
        return round_consensus(state.ybar, *self.shape).ravel()

    def _record(self, state: PhaState) -> None:
        state.elapsed = time.perf_counter() - state.started
        state.trace.append({
            "iter": state.iteration,
            "consensus_residual": state.consensus_residual(),
            "bound": state.bound,
            "estimate": state.estimate,
            "incumbent": state.incumbent,
            "fixed_count": len(state.fixed),
            "rho_pen": state.rho,
            "wall_ms": 1000.0 * state.elapsed,
            "centering": state.centering(),
        })

    def _check(self, state: PhaState) -> None:
        if not self.config.check_invariants:
            return
        if state.centering() > CENTERING_TOL:
            raise PhaError(f"multiplier centering violated: {state.centering():.3e}")
        for k, v in state.fixed.items():
            if np.any(state.Y[:, k] != v):
                raise PhaError(f"fixed coordinate {k} changed in a subproblem")
        if np.any(state.ybar < -1e-12) or np.any(state.ybar > 1 + 1e-12):
            raise PhaError("consensus left [0, 1]")

    # -- algorithm steps -----------------------------------------------------
    def init(self) -> PhaState:
        t0 = time.perf_counter()
        S = len(self.subs.problems)
        n = self.shape[0] * self.shape[1]
        Y = np.zeros((S, n))
        obj = np.zeros(S)
        for s in range(S):
            out = self.subs.solve(s)
            if out is None:
                raise PhaError(f"subproblem {s} (scenarios {self.subs.bundles[s].members}) infeasible")
            Y[s], obj[s], _ = out
        probs = self.subs.probs
        ybar = consensus(Y, probs)
        rho0 = self.config.rho or default_rho(self.inst)
        state = PhaState(iteration=0, probs=probs, Y=Y, ybar=ybar,
                         w=update_multipliers(np.zeros_like(Y), Y, ybar, rho0),
                         rho=rho0, rho0=rho0, streak=np.zeros(n, dtype=int), sub_obj=obj,
                         started=t0)
        state.bound = state.ws_bound = state.estimate = float(probs @ obj)
        self._update_streaks(state)
        self._consider_all(state)
        self._check(state)
        self._record(state)
        return state

    def _update_streaks(self, state: PhaState) -> None:
        agree = np.all(state.Y == state.Y[0], axis=0)
        state.streak = np.where(agree, state.streak + 1, 0)
        state.last_fixed = []
        if self.config.enable_hr:
            for k in np.flatnonzero(state.streak >= self.config.k_fix):
                if int(k) not in state.fixed:
                    state.fixed[int(k)] = float(state.Y[0, k])
                    state.last_fixed.append(int(k))

    def iterate(self, state: PhaState) -> PhaState:
        S = len(self.subs.problems)
        Y = np.zeros_like(state.Y)
        obj = np.zeros(S)
        est = np.zeros(S)
        for s in range(S):
            out = self.subs.solve(s, state.w[s], state.ybar, state.rho, state.fixed)
            if out is None and state.fixed:
                rolled = list(state.last_fixed) or list(state.fixed)
                log.warning("subproblem %d infeasible after fixing; releasing %s", s, rolled)
                for k in rolled:
                    state.fixed.pop(k, None)
                    state.streak[k] = 0
                out = self.subs.solve(s, state.w[s], state.ybar, state.rho, state.fixed)
            if out is None:
                raise PhaError(f"subproblem {s} (scenarios {self.subs.bundles[s].members}) "
                               "infeasible; aborting")
            Y[s], obj[s], prox = out
            est[s] = obj[s] - prox
        state.iteration += 1
        state.Y = Y
        state.sub_obj = obj
        state.estimate = float(state.probs @ est)
        if self.config.bound_solves:
            # multipliers are centered, so the w-only relaxation bounds the optimum from below
            lag = np.array([self.subs.solve(s, state.w[s], state.ybar, 0.0)[1] for s in range(S)])
            state.bound = max(state.bound, float(state.probs @ lag))
        state.ybar = consensus(Y, state.probs)
        state.w = update_multipliers(state.w, Y, state.ybar, state.rho)
        if self.config.enable_hr:
            state.rho = min(state.rho * self.config.rho_growth,
                            self.config.rho_max or 100.0 * state.rho0)
        self._update_streaks(state)
        self._consider_all(state)
        self._check(state)
        self._record(state)
        return state

    def check_termination(self, state: PhaState) -> Termination:
        return pha_check_termination(state, self.config)

    def solve(self) -> PhaResult:
        state = self.init()
        decision = self.check_termination(state)
        while decision == Termination.CONTINUE:
            state = self.iterate(state)
            decision = self.check_termination(state)
        if state.consensus_residual() > self.config.consensus_tol:
            self._consider(state, round_consensus(state.ybar, *self.shape).ravel())
        ev = self.evaluator.evaluate(FirstStageDecision(state.incumbent_y.reshape(self.shape)))
        gap = (ev.expected_cost - state.bound) / max(1e-10, abs(ev.expected_cost))
        ws_gap = (ev.expected_cost - state.ws_bound) / max(1e-10, abs(ev.expected_cost))
        return PhaResult(y=ev.y, objective=ev.expected_cost, bound=state.bound, gap=gap,
                         ws_bound=state.ws_bound, ws_gap=ws_gap, iterations=state.iteration,
                         termination=decision, trace=state.trace,
                         wall_time=time.perf_counter() - state.started,
                         n_subproblems=len(self.subs.problems), solution=ev.solution)


def pha_check_termination(state: PhaState, config: PhaConfig) -> Termination:
    elapsed = state.elapsed or (time.perf_counter() - state.started if state.started else 0.0)
    if np.isfinite(state.incumbent):
        gap = (state.incumbent - state.bound) / max(1e-10, abs(state.incumbent))
        if gap <= config.gap_tol:
            return Termination.GAP_MET
    if state.consensus_residual() <= config.consensus_tol:
        return Termination.CONSENSUS_MET
    if state.iteration >= config.max_iter:
        return Termination.ITER_LIMIT
    if elapsed > config.time_limit:
        return Termination.TIME_LIMIT
    return Termination.CONTINUE


def pha_init(inst, scenarios, config) -> tuple[ProgressiveHedging, PhaState]:
    ph = ProgressiveHedging(inst, scenarios, config)
    return ph, ph.init()


def pha_solve(inst: Instance, scenarios: Sequence[Scenario], config: PhaConfig | None = None,
              bundles: Sequence[Bundle] | None = None) -> PhaResult:
    return ProgressiveHedging(inst, scenarios, config or PhaConfig(), bundles).solve()


def pha_iterate(ph: ProgressiveHedging, state: PhaState) -> PhaState:
    return ph.iterate(state)
