"""Biomass-to-pellet two-stage stochastic MILP: data types and problem assembly.

Index conventions (all zero-based):

* ``b`` biomass type, ``i`` supplier, ``j`` depot site, ``c`` capacity level,
  ``p`` pellet type, ``r`` ash range (0 = cleanest), ``t`` period, ``tau`` harvest
  period of an age layer (``tau <= t``).
* Fractions (ash, moisture, losses) are stored in [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from pelletsc.problem import EQ, GE, LE, MilpProblem

DEFAULT_MAX_COLUMNS = 2_000_000
PROB_TOL = 1e-9


class InstanceTooLarge(ValueError):
    """Raised when a problem would exceed the configured column budget."""

    def __init__(self, n_cols: int, limit: int):
        super().__init__(f"instance too large: {n_cols} columns exceeds limit {limit}")
        self.n_cols = n_cols
        self.limit = limit


@dataclass(frozen=True, eq=False)
class Instance:
    suppliers: tuple
    depots: tuple
    biomass: tuple
    pellets: tuple
    capacities: tuple
    periods: tuple
    ash_ranges: tuple
    pellets_us: tuple
    pellets_eu: tuple
    ash_ok: np.ndarray  # (P, R) pellet p accepts ash range r
    biomass_ok: np.ndarray  # (B, P) biomass b can make pellet p
    invest_cost: np.ndarray  # (C, J)
    harvest_cost: np.ndarray  # (B, I, T)
    transport_cost: np.ndarray  # (B, I, J, T, T) by (tau, t)
    storage_cost_supply: np.ndarray  # (B, I, T)
    storage_cost_depot: np.ndarray  # (B, J, T)
    inspect_cost: np.ndarray  # (B, J, R, T)
    production_cost: np.ndarray  # (P, J, T)
    ash_adjust_cost: np.ndarray  # (B, J, R, R, T) from r down to r'
    moisture_cost: np.ndarray  # (B, J, R, T)
    shortage_penalty: np.ndarray  # (P, T)
    demand: np.ndarray  # (P, T)
    conversion: np.ndarray  # (B, R, P)
    depot_capacity: np.ndarray  # (C, J)
    supply_storage_cap: np.ndarray  # (B, I)
    depot_storage_cap: np.ndarray  # (B, C, J)
    loading_loss: np.ndarray  # (B, T)
    transit_loss: np.ndarray  # (B, T)
    transport_loss: bool = False

    @property
    def nI(self): return len(self.suppliers)
    @property
    def nJ(self): return len(self.depots)
    @property
    def nB(self): return len(self.biomass)
    @property
    def nP(self): return len(self.pellets)
    @property
    def nC(self): return len(self.capacities)
    @property
    def nT(self): return len(self.periods)
    @property
    def nR(self): return len(self.ash_ranges)

    def shapes(self) -> dict[str, tuple]:
        I, J, B, P, C, T, R = self.nI, self.nJ, self.nB, self.nP, self.nC, self.nT, self.nR
        return {
            "ash_ok": (P, R), "biomass_ok": (B, P), "invest_cost": (C, J),
            "harvest_cost": (B, I, T), "transport_cost": (B, I, J, T, T),
            "storage_cost_supply": (B, I, T), "storage_cost_depot": (B, J, T),
            "inspect_cost": (B, J, R, T), "production_cost": (P, J, T),
            "ash_adjust_cost": (B, J, R, R, T), "moisture_cost": (B, J, R, T),
            "shortage_penalty": (P, T), "demand": (P, T), "conversion": (B, R, P),
            "depot_capacity": (C, J), "supply_storage_cap": (B, I),
            "depot_storage_cap": (B, C, J), "loading_loss": (B, T), "transit_loss": (B, T),
        }

    def scaled_costs(self, lam: float) -> "Instance":
        """Copy with every cost parameter multiplied by ``lam``."""
        from dataclasses import replace
        names = ["invest_cost", "harvest_cost", "transport_cost", "storage_cost_supply",
                 "storage_cost_depot", "inspect_cost", "production_cost", "ash_adjust_cost",
                 "moisture_cost", "shortage_penalty"]
        return replace(self, **{k: getattr(self, k) * lam for k in names})


@dataclass(frozen=True, eq=False)
class Scenario:
    probability: float
    supply: np.ndarray  # (B, I, T)
    dml: np.ndarray  # (B, T, T): loss of age layer tau during period t
    ash_fraction: np.ndarray  # (B, J, R, T)
    ash_content: np.ndarray  # (B, J, T)
    moisture: np.ndarray  # (B, J, T) excess moisture
    preheat: np.ndarray  # (B, J, R, T) in {0, 1}
    transport_cost: np.ndarray | None = None  # optional (B, I, J, T, T) override

    def with_probability(self, prob: float) -> "Scenario":
        from dataclasses import replace
        return replace(self, probability=float(prob))


@dataclass
class FirstStageDecision:
    y: np.ndarray  # (C, J) in {0, 1}

    def __post_init__(self):
        self.y = np.asarray(np.round(self.y), dtype=int)

    def key(self) -> tuple:
        return tuple(int(v) for v in self.y.ravel())

    def is_valid(self) -> bool:
        return bool(np.all((self.y == 0) | (self.y == 1)) and np.all(self.y.sum(axis=0) <= 1))

    def n_open(self) -> int:
        return int(self.y.sum())


# ---------------------------------------------------------------------------
# validation


def validate_instance(inst: Instance, scenarios: Sequence[Scenario] = ()) -> list[str]:
    """Return human-readable violations; an empty list means the data is usable."""
    out: list[str] = []
    for name, size in zip("IJBPCTR", (inst.nI, inst.nJ, inst.nB, inst.nP, inst.nC, inst.nT, inst.nR)):
        if size < 1:
            out.append(f"index set {name} is empty")
    if out:
        return out
    for name, shape in inst.shapes().items():
        arr = np.asarray(getattr(inst, name))
        if arr.shape != shape:
            out.append(f"{name}: shape {arr.shape}, expected {shape}")
    if out:
        return out
    for name in inst.shapes():
        arr = np.asarray(getattr(inst, name), dtype=float)
        if not np.all(np.isfinite(arr)):
            out.append(f"{name}: non-finite entries")
        elif np.any(arr < 0):
            out.append(f"{name}: negative entries")
    conv = inst.conversion
    usable = inst.biomass_ok[:, None, :] & inst.ash_ok.T[None, :, :]
    if np.any(usable & ((conv <= 0) | (conv > 1))):
        out.append("conversion rate outside (0, 1]")
    R = inst.nR
    upper = np.triu(np.ones((R, R), dtype=bool), k=1)  # [r, r'] with r' > r
    if np.any(inst.ash_adjust_cost[:, :, upper, :] != 0):
        out.append("ash adjustment only downward: cost given for r' > r")
    for p in range(inst.nP):
        if inst.demand[p].sum() > 0 and not inst.ash_ok[p].any():
            out.append(f"pellet {p} has demand but no admissible ash range")
        if inst.demand[p].sum() > 0 and not inst.biomass_ok[:, p].any():
            out.append(f"pellet {p} has demand but no compatible biomass")
    for name in ("loading_loss", "transit_loss"):
        arr = getattr(inst, name)
        if np.any(arr >= 1):
            out.append(f"{name} must be < 1")
    for pp in list(inst.pellets_us) + list(inst.pellets_eu):
        if not 0 <= pp < inst.nP:
            out.append(f"market partition refers to unknown pellet {pp}")
    for k, sc in enumerate(scenarios):
        out.extend(f"scenario {k}: {msg}" for msg in validate_scenario(inst, sc))
    if scenarios:
        total = sum(sc.probability for sc in scenarios)
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"scenario probabilities sum to {total:.12g}, not 1")
    return out


def validate_scenario(inst: Instance, sc: Scenario) -> list[str]:
    B, I, J, R, T = inst.nB, inst.nI, inst.nJ, inst.nR, inst.nT
    out = []
    want = {"supply": (B, I, T), "dml": (B, T, T), "ash_fraction": (B, J, R, T),
            "ash_content": (B, J, T), "moisture": (B, J, T), "preheat": (B, J, R, T)}
    for name, shape in want.items():
        if np.shape(getattr(sc, name)) != shape:
            out.append(f"{name}: shape {np.shape(getattr(sc, name))}, expected {shape}")
    if out:
        return out
    if not 0 < sc.probability <= 1:
        out.append("probability outside (0, 1]")
    if np.any(sc.supply < 0) or not np.all(np.isfinite(sc.supply)):
        out.append("supply must be finite and non-negative")
    if np.any(sc.dml < 0) or np.any(sc.dml >= 1):
        out.append("dry matter loss outside [0, 1)")
    if np.any(sc.ash_fraction < 0) or np.any(sc.ash_fraction > 1):
        out.append("ash fractions outside [0, 1]")
    if np.any(np.abs(sc.ash_fraction.sum(axis=2) - 1.0) > PROB_TOL):
        out.append("ash fractions do not sum to 1")
    if np.any(sc.ash_content < 0) or np.any(sc.ash_content > 1):
        out.append("ash content outside [0, 1]")
    if np.any(sc.moisture < 0) or np.any(sc.moisture > 1):
        out.append("excess moisture outside [0, 1]")
    if not np.all(np.isin(sc.preheat, (0, 1))):
        out.append("preheat flags must be 0 or 1")
    if sc.transport_cost is not None:
        if np.shape(sc.transport_cost) != (B, I, J, T, T) or np.any(sc.transport_cost < 0):
            out.append("transport cost override malformed")
    return out


# ---------------------------------------------------------------------------
# assembly


@dataclass
class ScenarioLayout:
    """Column index arrays of one scenario block (-1 where no column exists)."""

    S: np.ndarray
    X: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    P: np.ndarray
    Z: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    L: np.ndarray
    D: np.ndarray
    U: np.ndarray

    def families(self):
        return {k: getattr(self, k) for k in ("S", "X", "H1", "H2", "P", "Z", "Q", "R", "L", "D", "U")}


@dataclass
class Layout:
    y: np.ndarray  # (C, J) column indices
    scenarios: list  # ScenarioLayout per member scenario
    members: list  # scenario identifiers used in names


class _Builder:
    def __init__(self, max_columns: int):
        self.c: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.names: list[tuple] = []
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.family: list[str] = []
        self.max_columns = max_columns

    def var(self, name: tuple, cost: float = 0.0, lb: float = 0.0, ub: float = np.inf) -> int:
        k = len(self.c)
        if k >= self.max_columns:
            raise InstanceTooLarge(k + 1, self.max_columns)
        self.c.append(cost)
        self.lb.append(lb)
        self.ub.append(ub)
        self.names.append(name)
        return k

    def row(self, terms, sense: str, rhs: float, family: str) -> int:
        i = len(self.rhs)
        for k, v in terms:
            if v != 0.0:
                self.rows.append(i)
                self.cols.append(k)
                self.vals.append(v)
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.family.append(family)
        return i

    def finish(self, binaries, layout) -> MilpProblem:
        prob = MilpProblem(
            c=np.array(self.c), rows=np.array(self.rows, dtype=np.int64),
            cols=np.array(self.cols, dtype=np.int64), vals=np.array(self.vals),
            senses=np.array(self.senses, dtype="<U1"), rhs=np.array(self.rhs),
            lb=np.array(self.lb), ub=np.array(self.ub), binaries=np.array(binaries, dtype=np.int64),
            names=self.names, row_family=self.family,
        )
        prob.layout = layout
        return prob


def count_columns(inst: Instance, n_scenarios: int) -> int:
    """Closed-form column count of the extensive form (used for the size guard)."""
    B, I, J, P, C, T, R = inst.nB, inst.nI, inst.nJ, inst.nP, inst.nC, inst.nT, inst.nR
    layers = T * (T + 1) // 2
    n_rp = inst.ash_ok.sum(axis=1)  # |R_p|
    n_L = int(sum(n_rp[p] for b in range(B) for p in range(P) if inst.biomass_ok[b, p])) * J * T
    per = (B * I * T + B * I * J * layers + B * I * layers + 2 * B * J * layers + B * J * T
           + B * J * R * T + B * J * (R * (R + 1) // 2) * T + n_L + int(n_rp.sum()) * J * T + P * T)
    return C * J + n_scenarios * per


def _add_first_stage(bld: _Builder, inst: Instance, cost_weight: float) -> np.ndarray:
    y = np.empty((inst.nC, inst.nJ), dtype=np.int64)
    for c in range(inst.nC):
        for j in range(inst.nJ):
            y[c, j] = bld.var(("Y", c, j), cost_weight * inst.invest_cost[c, j], 0.0, 1.0)
    for j in range(inst.nJ):
        bld.row([(y[c, j], 1.0) for c in range(inst.nC)], LE, 1.0, "2")
    return y


def _add_scenario(bld: _Builder, inst: Instance, sc: Scenario, weight: float, y: np.ndarray,
                  tag) -> ScenarioLayout:
    B, I, J, P, C, T, R = inst.nB, inst.nI, inst.nJ, inst.nP, inst.nC, inst.nT, inst.nR
    w = weight
    tcost = inst.transport_cost if sc.transport_cost is None else sc.transport_cost
    gain = np.ones((B, T))
    if inst.transport_loss:
        gain = (1.0 - inst.loading_loss) * (1.0 - inst.transit_loss)
    adj = (inst.ash_adjust_cost
           + (inst.moisture_cost * sc.preheat * sc.moisture[:, :, None, :])[:, :, None, :, :])

    S = np.full((B, I, T), -1)
    X = np.full((B, I, J, T, T), -1)
    H1 = np.full((B, I, T, T), -1)
    H2 = np.full((B, J, T, T), -1)
    Pv = np.full((B, J, T, T), -1)
    Z = np.full((B, J, T), -1)
    Q = np.full((B, J, R, T), -1)
    Rv = np.full((B, J, R, R, T), -1)
    L = np.full((B, R, P, J, T), -1)
    D = np.full((P, J, R, T), -1)
    U = np.full((P, T), -1)

    for b in range(B):
        for i in range(I):
            for t in range(T):
                S[b, i, t] = bld.var(("S", b, i, t, tag), w * inst.harvest_cost[b, i, t])
                for tau in range(t + 1):
                    H1[b, i, tau, t] = bld.var(("H1", b, i, tau, t, tag),
                                               w * inst.storage_cost_supply[b, i, t])
                    for j in range(J):
                        X[b, i, j, tau, t] = bld.var(("X", b, i, j, tau, t, tag),
                                                     w * tcost[b, i, j, tau, t])
        for j in range(J):
            for t in range(T):
                for tau in range(t + 1):
                    H2[b, j, tau, t] = bld.var(("H2", b, j, tau, t, tag),
                                               w * inst.storage_cost_depot[b, j, t])
                    Pv[b, j, tau, t] = bld.var(("P", b, j, tau, t, tag))
                Z[b, j, t] = bld.var(("Z", b, j, t, tag))
                for r in range(R):
                    Q[b, j, r, t] = bld.var(("Q", b, j, r, t, tag), w * inst.inspect_cost[b, j, r, t])
                    for r2 in range(r + 1):
                        Rv[b, j, r, r2, t] = bld.var(("R", b, j, r, r2, t, tag), w * adj[b, j, r, r2, t])
                for r in range(R):
                    for p in range(P):
                        if inst.biomass_ok[b, p] and inst.ash_ok[p, r]:
                            L[b, r, p, j, t] = bld.var(("L", b, r, p, j, t, tag))
    for p in range(P):
        for j in range(J):
            for r in range(R):
                if inst.ash_ok[p, r]:
                    for t in range(T):
                        D[p, j, r, t] = bld.var(("D", p, j, r, t, tag), w * inst.production_cost[p, j, t])
        for t in range(T):
            U[p, t] = bld.var(("U", p, t, tag), w * inst.shortage_penalty[p, t])

    # (3) harvest within availability
    for b in range(B):
        for i in range(I):
            for t in range(T):
                bld.row([(S[b, i, t], 1.0)], LE, float(sc.supply[b, i, t]), "3")
    # (4) fresh layer at supply sites
    for b in range(B):
        for i in range(I):
            for t in range(T):
                terms = [(S[b, i, t], 1.0), (H1[b, i, t, t], -1.0)]
                terms += [(X[b, i, j, t, t], -1.0) for j in range(J)]
                bld.row(terms, EQ, 0.0, "4")
    # (5) carried layers at supply sites
    for b in range(B):
        for i in range(I):
            for t in range(1, T):
                for tau in range(t):
                    keep = 1.0 - sc.dml[b, tau, t - 1]
                    terms = [(H1[b, i, tau, t - 1], keep), (H1[b, i, tau, t], -1.0)]
                    terms += [(X[b, i, j, tau, t], -1.0) for j in range(J)]
                    bld.row(terms, EQ, 0.0, "5")
    # (6) fresh layer at depots, (7) carried layers at depots
    for b in range(B):
        for j in range(J):
            for t in range(T):
                g = gain[b, t]
                terms = [(X[b, i, j, t, t], g) for i in range(I)]
                terms += [(H2[b, j, t, t], -1.0), (Pv[b, j, t, t], -1.0)]
                bld.row(terms, EQ, 0.0, "6")
    for b in range(B):
        for j in range(J):
            for t in range(1, T):
                g = gain[b, t]
                for tau in range(t):
                    keep = 1.0 - sc.dml[b, tau, t - 1]
                    terms = [(H2[b, j, tau, t - 1], keep)]
                    terms += [(X[b, i, j, tau, t], g) for i in range(I)]
                    terms += [(H2[b, j, tau, t], -1.0), (Pv[b, j, tau, t], -1.0)]
                    bld.row(terms, EQ, 0.0, "7")
    # (8), (9) storage capacities
    for b in range(B):
        for i in range(I):
            for t in range(T):
                bld.row([(H1[b, i, tau, t], 1.0) for tau in range(t + 1)], LE,
                        float(inst.supply_storage_cap[b, i]), "8")
    for b in range(B):
        for j in range(J):
            for t in range(T):
                terms = [(H2[b, j, tau, t], 1.0) for tau in range(t + 1)]
                terms += [(y[c, j], -float(inst.depot_storage_cap[b, c, j])) for c in range(C)]
                bld.row(terms, LE, 0.0, "9")
    # (10) availability for inspection
    for b in range(B):
        for j in range(J):
            for t in range(T):
                terms = [(Pv[b, j, tau, t], 1.0) for tau in range(t + 1)] + [(Z[b, j, t], -1.0)]
                bld.row(terms, EQ, 0.0, "10")
    # (11)+(12) classification Q = I * Z
    for b in range(B):
        for j in range(J):
            for t in range(T):
                for r in range(R):
                    bld.row([(Q[b, j, r, t], 1.0), (Z[b, j, t], -float(sc.ash_fraction[b, j, r, t]))],
                            EQ, 0.0, "11")
    # (13) every inspected ton at level r is assigned a target level r' <= r
    for b in range(B):
        for j in range(J):
            for t in range(T):
                for r in range(R):
                    terms = [(Rv[b, j, r, r2, t], 1.0) for r2 in range(r + 1)] + [(Q[b, j, r, t], -1.0)]
                    bld.row(terms, EQ, 0.0, "13")
    # (14) adjusted supply at level r' feeds pellet lines
    for b in range(B):
        for j in range(J):
            for t in range(T):
                for r2 in range(R):
                    terms = [(Rv[b, j, r, r2, t], 1.0) for r in range(r2, R)]
                    terms += [(L[b, r2, p, j, t], -1.0) for p in range(P) if L[b, r2, p, j, t] >= 0]
                    bld.row(terms, EQ, 0.0, "14")
    # (15) conversion to pellets
    for p in range(P):
        for j in range(J):
            for t in range(T):
                for r in range(R):
                    if not inst.ash_ok[p, r]:
                        continue
                    terms = [(L[b, r, p, j, t], float(inst.conversion[b, r, p]))
                             for b in range(B) if L[b, r, p, j, t] >= 0]
                    terms.append((D[p, j, r, t], -1.0))
                    bld.row(terms, EQ, 0.0, "15")
    # (16) production capacity of opened depots
    for j in range(J):
        for t in range(T):
            terms = [(D[p, j, r, t], 1.0) for p in range(P) for r in range(R) if D[p, j, r, t] >= 0]
            terms += [(y[c, j], -float(inst.depot_capacity[c, j])) for c in range(C)]
            bld.row(terms, LE, 0.0, "16")
    # (17) demand met by production or shortage
    for p in range(P):
        for t in range(T):
            terms = [(D[p, j, r, t], 1.0) for j in range(J) for r in range(R) if D[p, j, r, t] >= 0]
            terms.append((U[p, t], 1.0))
            bld.row(terms, EQ, float(inst.demand[p, t]), "17")
    return ScenarioLayout(S, X, H1, H2, Pv, Z, Q, Rv, L, D, U)


def _guard(inst: Instance, n_scen: int, max_columns: int) -> None:
    n = count_columns(inst, n_scen)
    if n > max_columns:
        raise InstanceTooLarge(n, max_columns)


def build_extensive_form(inst: Instance, scenarios: Sequence[Scenario],
                         max_columns: int = DEFAULT_MAX_COLUMNS) -> MilpProblem:
    """Deterministic equivalent: first-stage Y once, one second-stage block per scenario."""
    _guard(inst, len(scenarios), max_columns)
    bld = _Builder(max_columns)
    y = _add_first_stage(bld, inst, 1.0)
    blocks = [_add_scenario(bld, inst, sc, sc.probability, y, k) for k, sc in enumerate(scenarios)]
    return bld.finish(y.ravel(), Layout(y, blocks, list(range(len(scenarios)))))


def build_bundle_problem(inst: Instance, scenarios: Sequence[Scenario], members: Sequence[int],
                         max_columns: int = DEFAULT_MAX_COLUMNS) -> MilpProblem:
    """Extensive form of a bundle with conditional probabilities (no PHA terms)."""
    _guard(inst, len(members), max_columns)
    mass = sum(scenarios[k].probability for k in members)
    bld = _Builder(max_columns)
    y = _add_first_stage(bld, inst, 1.0)
    blocks = [_add_scenario(bld, inst, scenarios[k], scenarios[k].probability / mass, y, k)
              for k in members]
    return bld.finish(y.ravel(), Layout(y, blocks, list(members)))


def pha_objective_terms(base_c_y: np.ndarray, w: np.ndarray, ybar: np.ndarray, rho: float):
    """Linear coefficients on Y and constant for  w.Y + rho/2 * sum (Y - 2 Y ybar + ybar^2).

    Uses Y^2 = Y for binaries, so the proximal term is exact and linear.
    """
    coef = base_c_y + w + 0.5 * rho * (1.0 - 2.0 * ybar)
    const = 0.5 * rho * float(np.sum(ybar ** 2))
    return coef, const


def build_pha_subproblem(inst: Instance, scenarios: Sequence[Scenario], w: np.ndarray,
                         ybar: np.ndarray, rho: float, members: Sequence[int] | None = None,
                         max_columns: int = DEFAULT_MAX_COLUMNS) -> MilpProblem:
    """Scenario (or bundle) problem with multiplier and linearized proximal terms on Y.

    ``scenarios`` is the full scenario list; ``members`` selects the bundle
    (default: all of them).
    """
    if not rho > 0:
        raise ValueError("penalty rho must be positive")
    members = list(range(len(scenarios))) if members is None else list(members)
    prob = build_bundle_problem(inst, scenarios, members, max_columns)
    ycols = prob.layout.y.ravel()
    coef, const = pha_objective_terms(prob.c[ycols], np.asarray(w, float).ravel(),
                                      np.asarray(ybar, float).ravel(), rho)
    prob.c[ycols] = coef
    prob.obj_offset += const
    return prob


# ---------------------------------------------------------------------------
# solutions


@dataclass
class Solution:
    """Decoded primal values: first-stage ``y`` and dense second-stage arrays per scenario."""

    y: np.ndarray
    second: list  # list of dict[str, ndarray]
    scenario_ids: list = field(default_factory=list)


def decode(prob: MilpProblem, x: np.ndarray) -> Solution:
    lay: Layout = prob.layout
    y = x[lay.y]
    second = []
    for sl in lay.scenarios:
        vals = {}
        for name, idx in sl.families().items():
            arr = np.zeros(idx.shape)
            mask = idx >= 0
            arr[mask] = x[idx[mask]]
            vals[name] = arr
        second.append(vals)
    return Solution(y=y, second=second, scenario_ids=list(lay.members))


def second_stage_cost(inst: Instance, sc: Scenario, v: dict) -> float:
    """Scenario cost of a second-stage plan, evaluated from the dense arrays."""
    tcost = inst.transport_cost if sc.transport_cost is None else sc.transport_cost
    adj = inst.ash_adjust_cost + (inst.moisture_cost * sc.preheat * sc.moisture[:, :, None, :])[:, :, None, :, :]
    return float(
        np.sum(inst.harvest_cost * v["S"])
        + np.sum(tcost * v["X"])
        + np.einsum("bit,bist->", inst.storage_cost_supply, v["H1"])
        + np.einsum("bjt,bjst->", inst.storage_cost_depot, v["H2"])
        + np.einsum("pjt,pjrt->", inst.production_cost, v["D"])
        + np.sum(inst.shortage_penalty * v["U"])
        + np.sum(inst.inspect_cost * v["Q"])
        + np.sum(adj * v["R"])
    )


@dataclass
class ResidualReport:
    residuals: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    def failing(self) -> dict:
        return {k: v for k, v in self.residuals.items() if v > self.tol}

    def to_dict(self) -> dict:
        return {"tol": self.tol, "passed": self.passed, "max_residual": dict(self.residuals)}


def check_solution_feasibility(inst: Instance, scenarios: Sequence[Scenario], sol: Solution,
                               tol: float = 1e-6) -> ResidualReport:
    """Max absolute residual per constraint family, recomputed from the printed relations.

    ``sol.second[k]`` is checked against ``scenarios[sol.scenario_ids[k]]``.
    """
    T, R = inst.nT, inst.nR
    y = np.asarray(sol.y, float)
    res = {f: 0.0 for f in ("2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12", "13",
                            "14", "15", "16", "17", "18", "19", "20")}

    def upd(f, arr):
        arr = np.asarray(arr, float)
        if arr.size:
            res[f] = max(res[f], float(np.max(arr)))

    upd("2", np.maximum(y.sum(axis=0) - 1.0, 0))
    upd("18", np.minimum(np.abs(y), np.abs(y - 1)))
    gain = np.ones((inst.nB, T))
    if inst.transport_loss:
        gain = (1.0 - inst.loading_loss) * (1.0 - inst.transit_loss)
    tri = np.triu(np.ones((T, T), dtype=bool))  # [tau, t] valid when tau <= t
    rtri = np.tril(np.ones((R, R), dtype=bool))  # [r, r'] valid when r' <= r
    ids = sol.scenario_ids or list(range(len(sol.second)))
    for sid, v in zip(ids, sol.second):
        sc = scenarios[sid]
        S, X, H1, H2, P = v["S"], v["X"], v["H1"], v["H2"], v["P"]
        Z, Q, Rv, L, D, U = v["Z"], v["Q"], v["R"], v["L"], v["D"], v["U"]
        upd("3", np.maximum(S - sc.supply, 0))
        for t in range(T):
            upd("4", np.abs(S[:, :, t] - H1[:, :, t, t] - X[:, :, :, t, t].sum(axis=2)))
            upd("6", np.abs(gain[:, None, t] * X[:, :, :, t, t].sum(axis=1) - H2[:, :, t, t] - P[:, :, t, t]))
            for tau in range(t):
                keep = 1.0 - sc.dml[:, tau, t - 1]
                upd("5", np.abs(keep[:, None] * H1[:, :, tau, t - 1] - H1[:, :, tau, t]
                                - X[:, :, :, tau, t].sum(axis=2)))
                upd("7", np.abs(keep[:, None] * H2[:, :, tau, t - 1]
                                + gain[:, None, t] * X[:, :, :, tau, t].sum(axis=1)
                                - H2[:, :, tau, t] - P[:, :, tau, t]))
        upd("8", np.maximum(H1.sum(axis=2) - inst.supply_storage_cap[:, :, None], 0))
        cap2 = np.einsum("bcj,cj->bj", inst.depot_storage_cap, y)
        upd("9", np.maximum(H2.sum(axis=2) - cap2[:, :, None], 0))
        upd("10", np.abs(P.sum(axis=2) - Z))
        upd("11", np.abs(Q - sc.ash_fraction * Z[:, :, None, :]))
        upd("12", np.abs(Q.sum(axis=2) - Z))
        upd("13", np.abs(Rv.sum(axis=3) - Q))
        supply_r2 = Rv.sum(axis=2)  # (B, J, R', T)
        draw = L.sum(axis=2).transpose(0, 2, 1, 3)  # (B, J, R', T)
        upd("14", np.abs(supply_r2 - draw))
        made = np.einsum("brp,brpjt->pjrt", inst.conversion, L)
        upd("15", np.abs(made - D))
        incompatible = ~(inst.biomass_ok[:, None, :] & inst.ash_ok.T[None, :, :])  # (B, R, P)
        upd("15", np.abs(L[incompatible]))
        upd("15", np.abs(D.transpose(0, 2, 1, 3)[~inst.ash_ok]))
        cap = np.einsum("cj,cj->j", inst.depot_capacity, y)
        upd("16", np.maximum(D.sum(axis=(0, 2)) - cap[:, None], 0))
        upd("17", np.abs(D.sum(axis=(1, 2)) + U - inst.demand))
        for name in ("X", "H1", "H2", "P"):
            upd("19", np.maximum(-v[name], 0))
        upd("19", np.abs(X[..., ~tri]))
        upd("19", np.abs(H1[..., ~tri]))
        upd("19", np.abs(H2[..., ~tri]))
        upd("19", np.abs(P[..., ~tri]))
        for name in ("S", "Z", "Q", "R", "L", "D", "U"):
            upd("20", np.maximum(-v[name], 0))
        upd("20", np.abs(Rv[:, :, ~rtri, :]))
    return ResidualReport(res, tol)


# ---------------------------------------------------------------------------
# first-stage evaluation


class ScenarioEvaluator:
    """Evaluates fixed first-stage decisions; scenario LPs are built once and reused."""

    def __init__(self, inst: Instance, scenarios: Sequence[Scenario], lp=None):
        from pelletsc.kernel.simplex import solve_lp
        self.inst = inst
        self.scenarios = list(scenarios)
        self.lp = lp or solve_lp
        self._probs: dict[int, MilpProblem] = {}
        self._cache: dict[tuple, "Evaluation"] = {}

    def problem(self, k: int) -> MilpProblem:
        if k not in self._probs:
            bld = _Builder(DEFAULT_MAX_COLUMNS)
            y = _add_first_stage(bld, self.inst, 0.0)
            block = _add_scenario(bld, self.inst, self.scenarios[k], 1.0, y, k)
            self._probs[k] = bld.finish(y.ravel(), Layout(y, [block], [k]))
        return self._probs[k]

    def solve_scenario(self, k: int, y: np.ndarray):
        from pelletsc.kernel.simplex import LpStatus
        prob = self.problem(k)
        ycols = prob.layout.y.ravel()
        lb, ub = prob.lb.copy(), prob.ub.copy()
        lb[ycols] = ub[ycols] = np.asarray(y, float).ravel()
        sol = self.lp(prob, lb=lb, ub=ub)
        if sol.status != LpStatus.OPTIMAL:
            raise RuntimeError(f"scenario {k}: second-stage LP ended with status {sol.status.value}")
        return prob, sol

    def evaluate(self, y) -> "Evaluation":
        dec = y if isinstance(y, FirstStageDecision) else FirstStageDecision(np.asarray(y))
        key = dec.key()
        if key in self._cache:
            return self._cache[key]
        if not dec.is_valid():
            raise ValueError("first-stage decision violates the one-size-per-site rule")
        first = float(np.sum(self.inst.invest_cost * dec.y))
        costs, seconds = [], []
        for k in range(len(self.scenarios)):
            prob, sol = self.solve_scenario(k, dec.y)
            costs.append(sol.objective)
            part = decode(prob, sol.x)
            seconds.append(part.second[0])
        costs = np.array(costs)
        probs = np.array([sc.probability for sc in self.scenarios])
        ev = Evaluation(dec.y.copy(), first, costs, float(first + probs @ costs),
                        Solution(dec.y.astype(float), seconds, list(range(len(self.scenarios)))))
        self._cache[key] = ev
        return ev


@dataclass
class Evaluation:
    y: np.ndarray
    first_stage_cost: float
    scenario_costs: np.ndarray
    expected_cost: float
    solution: Solution


def evaluate_first_stage(inst: Instance, scenarios: Sequence[Scenario], y, lp=None) -> Evaluation:
    """Expected total cost of opening decision ``y``: one LP per scenario."""
    return ScenarioEvaluator(inst, scenarios, lp).evaluate(y)


def all_first_stage_decisions(inst: Instance):
    """Every y with at most one capacity level per site (brute-force enumeration)."""
    import itertools
    C, J = inst.nC, inst.nJ
    for choice in itertools.product(range(C + 1), repeat=J):
        y = np.zeros((C, J), dtype=int)
        for j, ch in enumerate(choice):
            if ch:
                y[ch - 1, j] = 1
        yield y
