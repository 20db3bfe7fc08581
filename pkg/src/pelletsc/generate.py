"""Synthetic instances: the T1 micro-fixture and the seeded generator behind bench9.

Generated cost structures keep the quality study well posed: ash-adjustment
costs grow with the starting ash range, conversion rates do not depend on the
ash range, admissible ranges are downward closed (a pellet that accepts range
r accepts every cleaner range), and preheating flags are shared by all ranges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pelletsc.model import Instance, Scenario
from pelletsc.scenario import ScenarioModelSpec, derive_ash_fractions, make_rng

GENERATOR_STREAM = 99

# bench9 grid: |I| x |J| crossed, |T| tied to the |I| level
BENCH9_I = (3, 4, 5)
BENCH9_J = (2, 3, 4)
BENCH9_T = {3: 2, 4: 3, 5: 3}
BENCH9_SCENARIOS = 6


@dataclass
class Case:
    """An instance together with its scenario model and (optionally) explicit scenarios."""

    instance: Instance
    spec: ScenarioModelSpec
    scenarios: list = field(default_factory=list)
    name: str = ""
    meta: dict = field(default_factory=dict)


def _labels(prefix: str, n: int) -> tuple:
    return tuple(f"{prefix}{k + 1}" for k in range(n))


def t1_case() -> Case:
    """Hand-auditable micro-instance: |I|=|J|=2, |C|=|B|=|P|=1, |R|=|T|=|Omega|=2."""
    I, J, C, B, P, R, T = 2, 2, 1, 1, 1, 2, 2
    ash_adjust = np.zeros((B, J, R, R, T))
    ash_adjust[:, :, 1, 0, :] = 2.0
    transport = np.empty((B, I, J, T, T))
    for i in range(I):
        for j in range(J):
            transport[:, i, j] = 1.0 if i == j else 2.0
    inst = Instance(
        suppliers=_labels("s", I), depots=_labels("d", J), biomass=("pine",), pellets=("A1",),
        capacities=("std",), periods=_labels("t", T), ash_ranges=("low", "high"),
        pellets_us=(0,), pellets_eu=(),
        ash_ok=np.ones((P, R), dtype=bool), biomass_ok=np.ones((B, P), dtype=bool),
        invest_cost=np.full((C, J), 100.0),
        harvest_cost=np.array([[[1.0, 1.0], [2.0, 2.0]]]),
        transport_cost=transport,
        storage_cost_supply=np.ones((B, I, T)),
        storage_cost_depot=np.ones((B, J, T)),
        inspect_cost=np.ones((B, J, R, T)),
        production_cost=np.array([[[1.0, 1.0], [2.0, 2.0]]]),
        ash_adjust_cost=ash_adjust,
        moisture_cost=np.ones((B, J, R, T)),
        shortage_penalty=np.full((P, T), 50.0),
        demand=np.full((P, T), 4.0),
        conversion=np.full((B, R, P), 0.8),
        depot_capacity=np.full((C, J), 100.0),
        supply_storage_cap=np.full((B, I), 100.0),
        depot_storage_cap=np.full((B, C, J), 100.0),
        loading_loss=np.full((B, T), 0.01),
        transit_loss=np.full((B, T), 0.02),
    )
    edges = (0.0, 0.01, np.inf)

    def scen(supply, dml, gamma, moist, pre):
        gamma = np.array(gamma, float).reshape(B, J, T)
        frac = np.moveaxis(derive_ash_fractions(gamma, edges), -1, 2)
        dml_arr = np.zeros((B, T, T))
        dml_arr[:, 0, 0] = dml
        dml_arr[:, 0, 1] = dml
        dml_arr[:, 1, 1] = dml
        return Scenario(
            probability=0.5, supply=np.array(supply, float).reshape(B, I, T), dml=dml_arr,
            ash_fraction=frac, ash_content=gamma, moisture=np.full((B, J, T), moist),
            preheat=np.full((B, J, R, T), float(pre)),
        )

    scenarios = [
        scen([[10, 10], [10, 10]], 0.02, [[0.008, 0.008], [0.015, 0.015]], 0.10, 1),
        scen([[2, 2], [10, 10]], 0.04, [[0.012, 0.012], [0.008, 0.008]], 0.20, 0),
    ]
    spec = ScenarioModelSpec(
        supply_mean=np.full((B, I, T), 3.0), n_depots=J, ash_edges=edges, supply_cv=0.5,
        dml_low=0.01, dml_high=0.05, ash_tri=(0.004, 0.01, 0.02), moisture_tri=(0.05, 0.1, 0.2),
        preheat_prob=0.5,
    )
    return Case(inst, spec, scenarios, name="T1")


def generate_case(n_suppliers: int, n_depots: int, n_periods: int, seed: int = 0,
                  n_biomass: int = 2, n_pellets: int = 2, n_capacities: int = 2,
                  n_ranges: int = 3, n_scenarios: int = 0, name: str = "") -> Case:
    """Seeded random instance plus scenario model; ``n_scenarios > 0`` also samples scenarios."""
    from pelletsc.scenario import sample_scenarios

    I, J, T, B, P, C, R = n_suppliers, n_depots, n_periods, n_biomass, n_pellets, n_capacities, n_ranges
    for label, v in (("|I|", I), ("|J|", J), ("|T|", T), ("|B|", B), ("|P|", P), ("|C|", C), ("|R|", R)):
        if v < 1:
            raise ValueError(f"{label} must be >= 1, got {v}")
    rng = make_rng((seed, GENERATOR_STREAM))
    sup_xy = rng.uniform(0, 100, (I, 2))
    dep_xy = rng.uniform(0, 100, (J, 2))
    dist = np.linalg.norm(sup_xy[:, None, :] - dep_xy[None, :, :], axis=2)

    size_cost = np.linspace(1500.0, 2500.0, C) if C > 1 else np.array([1500.0])
    size_cap = np.linspace(40.0, 80.0, C) if C > 1 else np.array([40.0])
    invest = size_cost[:, None] * rng.uniform(0.85, 1.15, (C, J))
    capacity = np.repeat(size_cap[:, None], J, axis=1)
    depot_store = np.broadcast_to(0.75 * size_cap[None, :, None], (B, C, J)).copy()

    demand = rng.uniform(0.6, 0.9, (P, T)) * (50.0 * J / P)
    season = np.linspace(1.4, 0.6, T) if T > 1 else np.ones(1)
    base = 1.1 * (60.0 * J) / (B * I)
    supply_mean = base * rng.uniform(0.8, 1.2, (B, I, 1)) * season[None, None, :]

    harvest = rng.uniform(8, 12, (B, I, 1)) * (1.0 + 0.1 * np.arange(T))[None, None, :]
    transport = np.broadcast_to((1.0 + 0.12 * dist)[None, :, :, None, None], (B, I, J, T, T)).copy()
    h1 = rng.uniform(0.5, 1.0, (B, I, T))
    h2 = rng.uniform(0.8, 1.4, (B, J, T))
    inspect = np.ones((B, J, R, T))
    production = rng.uniform(5, 8, (P, J, T))
    rr = np.arange(R)
    steps = np.clip(rr[:, None] - rr[None, :], 0, None).astype(float)  # [r, r']
    ash_adjust = np.broadcast_to((4.0 * steps)[None, None, :, :, None], (B, J, R, R, T)).copy()
    moisture_cost = np.broadcast_to(rng.uniform(40, 80, (B, J))[:, :, None, None], (B, J, R, T)).copy()
    penalty = rng.uniform(70, 100, (P, T))
    conversion = np.broadcast_to(rng.uniform(0.8, 0.9, (B, 1, P)), (B, R, P)).copy()

    ash_ok = np.ones((P, R), dtype=bool)
    us, eu = [], []
    for p in range(P):
        if p % 2 == 1 and R > 1:
            ash_ok[p, R - 1:] = False  # EU grades reject the dirtiest range
            eu.append(p)
        else:
            us.append(p)
    inst = Instance(
        suppliers=_labels("s", I), depots=_labels("d", J), biomass=_labels("b", B),
        pellets=_labels("p", P), capacities=_labels("c", C), periods=_labels("t", T),
        ash_ranges=_labels("r", R), pellets_us=tuple(us), pellets_eu=tuple(eu),
        ash_ok=ash_ok, biomass_ok=np.ones((B, P), dtype=bool), invest_cost=invest,
        harvest_cost=harvest, transport_cost=transport, storage_cost_supply=h1,
        storage_cost_depot=h2, inspect_cost=inspect, production_cost=production,
        ash_adjust_cost=ash_adjust, moisture_cost=moisture_cost, shortage_penalty=penalty,
        demand=demand, conversion=conversion, depot_capacity=capacity,
        supply_storage_cap=0.5 * base * np.ones((B, I)), depot_storage_cap=depot_store,
        loading_loss=np.full((B, T), 0.01), transit_loss=np.full((B, T), 0.02),
    )
    edges = tuple([0.0] + [0.01 * k for k in range(1, R)] + [np.inf])
    spec = ScenarioModelSpec(
        supply_mean=supply_mean, n_depots=J, ash_edges=edges, supply_cv=0.3,
        dml_low=0.01, dml_high=0.05, ash_tri=(0.004, 0.011, 0.028),
        moisture_tri=(0.02, 0.08, 0.2), preheat_prob=0.5,
    )
    scenarios = sample_scenarios(spec, n_scenarios, seed) if n_scenarios else []
    return Case(inst, spec, scenarios, name=name or f"I{I}_J{J}_T{T}_s{seed}",
                meta={"seed": seed, "sizes": {"I": I, "J": J, "T": T, "B": B, "P": P, "C": C, "R": R}})


def bench9(seed: int = 0, n_scenarios: int = BENCH9_SCENARIOS) -> list[Case]:
    """The canonical 9-instance grid, numbered 1..9 in (|I|, |J|) order."""
    cases = []
    k = 0
    for I in BENCH9_I:
        for J in BENCH9_J:
            k += 1
            cases.append(generate_case(I, J, BENCH9_T[I], seed=seed + k, n_scenarios=n_scenarios,
                                       name=f"bench{k:02d}_I{I}_J{J}_T{BENCH9_T[I]}"))
    return cases
