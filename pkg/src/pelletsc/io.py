"""JSON files holding an instance, its scenario model and (optionally) explicit scenarios.

Layout (``bqp_version`` 1)::

    {"bqp_version": 1, "name": ...,
     "sets": {label lists; pellets_us / pellets_eu as pellet labels},
     "parameters": {every Instance array, nested lists in declared set order},
     "scenario_model": {ScenarioModelSpec fields; an open top ash edge is null},
     "options": {"transport_loss": bool},
     "scenarios": [{probability, supply, dml, ash_fraction, ash_content,
                    moisture, preheat[, transport_cost]}, ...],   # optional
     "meta": {...}}                                                 # optional

All numbers are finite doubles; fractions (losses, ash, moisture) are stored in [0, 1].
"""
from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path

import numpy as np

from pelletsc.generate import Case
from pelletsc.model import Instance, Scenario
from pelletsc.scenario import ScenarioModelSpec

BQP_VERSION = 1
SET_KEYS = ("suppliers", "depots", "biomass", "pellets", "capacities", "periods", "ash_ranges")
SCENARIO_ARRAYS = ("supply", "dml", "ash_fraction", "ash_content", "moisture", "preheat")


class FormatError(ValueError):
    pass


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    f = float(v)
    if not np.isfinite(f):
        raise FormatError("non-finite number cannot be written")
    return f


def _arr(a) -> list:
    a = np.asarray(a)
    if a.dtype == bool:
        return a.tolist()
    if not np.all(np.isfinite(a)):
        raise FormatError("non-finite number cannot be written")
    return a.astype(float).tolist()


def instance_to_dict(inst: Instance) -> tuple[dict, dict, dict]:
    sets = {k: list(getattr(inst, k)) for k in SET_KEYS}
    sets["pellets_us"] = [inst.pellets[p] for p in inst.pellets_us]
    sets["pellets_eu"] = [inst.pellets[p] for p in inst.pellets_eu]
    params = {k: _arr(getattr(inst, k)) for k in inst.shapes()}
    return sets, params, {"transport_loss": bool(inst.transport_loss)}


def spec_to_dict(spec: ScenarioModelSpec) -> dict:
    edges = [None if np.isinf(e) else float(e) for e in spec.ash_edges]
    return {
        "supply_mean": _arr(spec.supply_mean), "n_depots": int(spec.n_depots), "ash_edges": edges,
        "supply_cv": _num(spec.supply_cv), "dml_low": _num(spec.dml_low),
        "dml_high": _num(spec.dml_high), "ash_tri": [_num(v) for v in spec.ash_tri],
        "moisture_tri": [_num(v) for v in spec.moisture_tri],
        "preheat_prob": _num(spec.preheat_prob), "smear_width": _num(spec.smear_width),
        "ash_mult": _num(spec.ash_mult), "moist_mult": _num(spec.moist_mult),
    }


def scenario_to_dict(sc: Scenario) -> dict:
    d = {"probability": _num(sc.probability)}
    d.update({k: _arr(getattr(sc, k)) for k in SCENARIO_ARRAYS})
    if sc.transport_cost is not None:
        d["transport_cost"] = _arr(sc.transport_cost)
    return d


def case_to_dict(case: Case, include_scenarios: bool = True) -> dict:
    sets, params, options = instance_to_dict(case.instance)
    doc = {"bqp_version": BQP_VERSION, "name": case.name, "sets": sets, "parameters": params,
           "scenario_model": spec_to_dict(case.spec), "options": options}
    if include_scenarios and case.scenarios:
        doc["scenarios"] = [scenario_to_dict(sc) for sc in case.scenarios]
    if case.meta:
        doc["meta"] = case.meta
    return doc


def dumps(doc: dict) -> str:
    """One top-level (and one second-level) key per line, arrays kept compact."""
    out = ["{"]
    items = list(doc.items())
    for n, (k, v) in enumerate(items):
        tail = "," if n < len(items) - 1 else ""
        if isinstance(v, dict) and v:
            out.append(f"  {json.dumps(k)}: {{")
            sub = list(v.items())
            for m, (k2, v2) in enumerate(sub):
                t2 = "," if m < len(sub) - 1 else ""
                out.append(f"    {json.dumps(k2)}: {json.dumps(v2, separators=(',', ':'))}{t2}")
            out.append("  }" + tail)
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            out.append(f"  {json.dumps(k)}: [")
            for m, v2 in enumerate(v):
                t2 = "," if m < len(v) - 1 else ""
                out.append(f"    {json.dumps(v2, separators=(',', ':'))}{t2}")
            out.append("  ]" + tail)
        else:
            out.append(f"  {json.dumps(k)}: {json.dumps(v)}{tail}")
    out.append("}")
    return "\n".join(out) + "\n"


def save_case(case: Case, path, include_scenarios: bool = True) -> Path:
    path = Path(path)
    path.write_text(dumps(case_to_dict(case, include_scenarios)))
    return path


def _require(doc: dict, key: str, where: str = "file"):
    if key not in doc:
        raise FormatError(f"{where}: missing key {key!r}")
    return doc[key]


def instance_from_dict(sets: dict, params: dict, options: dict | None = None) -> Instance:
    labels = {k: tuple(_require(sets, k, "sets")) for k in SET_KEYS}
    pos = {p: k for k, p in enumerate(labels["pellets"])}
    try:
        us = tuple(pos[p] for p in sets.get("pellets_us", []))
        eu = tuple(pos[p] for p in sets.get("pellets_eu", []))
    except KeyError as exc:
        raise FormatError(f"sets: unknown pellet label {exc.args[0]!r}") from None
    proto = Instance(**labels, pellets_us=us, pellets_eu=eu,
                     **{k: np.zeros(0) for k in _array_fields()})
    arrays = {}
    for k, shape in proto.shapes().items():
        a = np.asarray(_require(params, k, "parameters"), dtype=bool if k.endswith("_ok") else float)
        if a.shape != shape:
            raise FormatError(f"parameters.{k}: shape {a.shape}, expected {shape}")
        arrays[k] = a
    return Instance(**labels, pellets_us=us, pellets_eu=eu, **arrays,
                    transport_loss=bool((options or {}).get("transport_loss", False)))


def _array_fields() -> list[str]:
    skip = set(SET_KEYS) | {"pellets_us", "pellets_eu", "transport_loss"}
    return [f.name for f in fields(Instance) if f.name not in skip]


def spec_from_dict(d: dict) -> ScenarioModelSpec:
    edges = tuple(np.inf if e is None else float(e) for e in _require(d, "ash_edges", "scenario_model"))
    kw = {k: d[k] for k in ("supply_cv", "dml_low", "dml_high", "preheat_prob", "smear_width",
                            "ash_mult", "moist_mult") if k in d}
    for k in ("ash_tri", "moisture_tri"):
        if k in d:
            kw[k] = tuple(float(v) for v in d[k])
    return ScenarioModelSpec(supply_mean=np.asarray(_require(d, "supply_mean", "scenario_model"), float),
                             n_depots=int(_require(d, "n_depots", "scenario_model")),
                             ash_edges=edges, **kw)


def scenario_from_dict(d: dict) -> Scenario:
    arrays = {k: np.asarray(_require(d, k, "scenario"), float) for k in SCENARIO_ARRAYS}
    tc = d.get("transport_cost")
    return Scenario(probability=float(_require(d, "probability", "scenario")), **arrays,
                    transport_cost=None if tc is None else np.asarray(tc, float))


def case_from_dict(doc: dict) -> Case:
    version = doc.get("bqp_version")
    if version != BQP_VERSION:
        raise FormatError(f"unsupported or missing bqp_version {version!r} (expected {BQP_VERSION})")
    inst = instance_from_dict(_require(doc, "sets"), _require(doc, "parameters"), doc.get("options"))
    spec = spec_from_dict(_require(doc, "scenario_model"))
    scenarios = [scenario_from_dict(s) for s in doc.get("scenarios", [])]
    return Case(inst, spec, scenarios, name=doc.get("name", ""), meta=doc.get("meta", {}))


def load_case(path) -> Case:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    return case_from_dict(doc)
