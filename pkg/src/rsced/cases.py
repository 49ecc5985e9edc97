"""Case files: JSON loading with field-addressed errors, serialization, fixtures.

Internally every quantity is in MW and $/MWh. A file with ``"units": "pu"``
gives powers (demand, line capacity, generator limits, reserve and shed caps)
on ``base_mva``; costs and VoLL are always $/MWh.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import (IslandedNetwork, ParseError, ProbabilityMassExceeded, UnsupportedSchemaVersion,
                     ValidationError)
from .network import (Bus, Contingency, GeneratorSpec, Line, Network, ScenarioSet,
                      all_single_line_contingencies, make_scenarios, no_contingencies)

SCHEMA_VERSION = 1
BUNDLED = ("case3_fig3", "case3_nlmp_deficit", "case2_congested")


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "all_single_lines"
    probability: float | tuple[float, ...] = 0.1
    contingencies: tuple[tuple[tuple[int, ...], float], ...] = ()
    da_multiplier: float = 1.0
    se_multiplier: float = 1.0


@dataclass(frozen=True)
class SolveConfig:
    variant: str = "rsced"
    alpha: float = 0.0
    method: str = "monolithic"
    pricing: str = "both"
    tolerance: float = 1e-6
    psced_limit: str = "nominal"


@dataclass(frozen=True)
class CaseFile:
    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[GeneratorSpec, ...]
    slack_bus: int = 0
    base_mva: float = 100.0
    scenario_config: ScenarioConfig = field(default_factory=ScenarioConfig)
    solve_config: SolveConfig = field(default_factory=SolveConfig)
    schema_version: int = SCHEMA_VERSION

    def network(self) -> Network:
        return Network(self.buses, self.lines, self.generators, self.slack_bus, self.name)

    def scenarios(self, network: Network | None = None) -> ScenarioSet:
        net = network or self.network()
        cfg = self.scenario_config
        if cfg.mode == "none":
            return no_contingencies(net)
        if cfg.mode == "all_single_lines":
            return all_single_line_contingencies(net, cfg.probability, cfg.da_multiplier,
                                                 cfg.se_multiplier)
        cons = [Contingency(k, frozenset(removed), p, cfg.da_multiplier, cfg.se_multiplier)
                for k, (removed, p) in enumerate(cfg.contingencies)]
        return make_scenarios(net, cons)

    def with_solve(self, **changes) -> "CaseFile":
        return replace(self, solve_config=replace(self.solve_config, **changes))


# --------------------------------------------------------------------------- loading
def _schema() -> dict:
    text = resources.files("rsced").joinpath("data/case.schema.json").read_text()
    return json.loads(text)


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ValidationError(path, message)


def case_from_dict(data: dict) -> CaseFile:
    if not isinstance(data, dict):
        raise ValidationError("", "case file must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnsupportedSchemaVersion("schema_version",
                                       f"unsupported version {version!r}; expected {SCHEMA_VERSION}")
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ValidationError(_path(err.absolute_path), err.message)

    base = float(data.get("base_mva", 100.0))
    unit = base if data.get("units", "MW") == "pu" else 1.0
    n = len(data["buses"])

    buses = []
    for i, b in enumerate(data["buses"]):
        _check(b["id"] == i, f"buses[{i}].id", f"bus ids must be 0..n-1 in order, got {b['id']}")
        buses.append(Bus(i, b["demand"] * unit, b.get("voll", 0.0)))
    lines = []
    for i, ln in enumerate(data["lines"]):
        _check(ln["id"] == i, f"lines[{i}].id", f"line ids must be 0..l-1 in order, got {ln['id']}")
        for end in ("from", "to"):
            _check(ln[end] < n, f"lines[{i}].{end}", f"unknown bus {ln[end]}")
        _check(ln["from"] != ln["to"], f"lines[{i}]", "line connects a bus to itself")
        lines.append(Line(i, ln["from"], ln["to"], ln["reactance"], ln["capacity"] * unit))
    gens, seen = [], set()
    for i, g in enumerate(data.get("generators", [])):
        path = f"generators[{i}]"
        _check(g["bus"] < n, f"{path}.bus", f"unknown bus {g['bus']}")
        _check(g["bus"] not in seen, f"{path}.bus", f"second generator at bus {g['bus']}")
        seen.add(g["bus"])
        gmin, gmax = g.get("gmin", 0.0) * unit, g.get("gmax", 0.0) * unit
        _check(gmin <= gmax, f"{path}.gmin", f"gmin {gmin} exceeds gmax {gmax}")
        shed = g.get("load_shed_cap")
        gens.append(GeneratorSpec(
            g["bus"], g.get("cost", 0.0), gmin, gmax,
            g.get("reserve_cost_up", 0.0), g.get("reserve_cost_down", 0.0),
            g.get("reserve_cap_up", 0.0) * unit, g.get("reserve_cap_down", 0.0) * unit,
            None if shed is None else shed * unit))
    slack = data.get("slack_bus", 0)
    _check(slack < n, "slack_bus", f"slack bus {slack} is not a bus id")

    sc = data.get("scenario_config", {})
    da, se = sc.get("da_multiplier", 1.0), sc.get("se_multiplier", 1.0)
    _check(da >= se, "scenario_config.da_multiplier", "da_multiplier must be >= se_multiplier")
    prob = sc.get("probability", 0.1)
    if isinstance(prob, list):
        _check(len(prob) == len(lines), "scenario_config.probability",
               f"need one probability per line ({len(lines)}), got {len(prob)}")
        prob = tuple(float(p) for p in prob)
    cons = tuple((tuple(c["removed_lines"]), float(c["probability"]))
                 for c in sc.get("contingencies", []))
    for k, (removed, _) in enumerate(cons):
        for j, line in enumerate(removed):
            _check(line < len(lines), f"scenario_config.contingencies[{k}].removed_lines[{j}]",
                   f"unknown line {line}")
    mode = sc.get("mode", "all_single_lines" if "contingencies" not in sc else "explicit")
    scen = ScenarioConfig(mode, prob, cons, da, se)

    so = data.get("solve_config", {})
    solve = SolveConfig(**so)

    case = CaseFile(data.get("name", ""), tuple(buses), tuple(lines), tuple(gens), slack, base,
                    scen, solve)
    try:
        net = case.network()
    except IslandedNetwork as exc:
        raise ValidationError("lines", str(exc)) from None
    except ValueError as exc:
        raise ValidationError("", str(exc)) from None
    try:
        case.scenarios(net)
    except ProbabilityMassExceeded:
        raise
    except IslandedNetwork as exc:
        raise ValidationError("scenario_config.contingencies", str(exc)) from None
    except ValueError as exc:
        raise ValidationError("scenario_config", str(exc)) from None
    return case


def loads_case(text: str) -> CaseFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, col {exc.colno}: {exc.msg}") from None
    return case_from_dict(data)


def bundled_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".json") else name
    return Path(str(resources.files("rsced").joinpath(f"data/{stem}.json")))


def load_case(path: str | Path) -> CaseFile:
    """Load a case file; bare bundled names such as ``case3_fig3`` also work."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_path(p.name)
        if p.parent == Path(".") and bundled.exists():
            p = bundled
        else:
            raise FileNotFoundError(f"case file {path} not found")
    return loads_case(p.read_text())


# --------------------------------------------------------------------------- writing
def case_to_dict(case: CaseFile) -> dict[str, Any]:
    sc, so = case.scenario_config, case.solve_config
    scen: dict[str, Any] = {"mode": sc.mode, "da_multiplier": sc.da_multiplier,
                            "se_multiplier": sc.se_multiplier}
    if sc.mode == "explicit":
        scen["contingencies"] = [{"removed_lines": list(r), "probability": p}
                                 for r, p in sc.contingencies]
    else:
        scen["probability"] = list(sc.probability) if isinstance(sc.probability, tuple) \
            else sc.probability
    gens = []
    for g in case.generators:
        entry = {"bus": g.bus, "cost": g.cost, "gmin": g.gmin, "gmax": g.gmax,
                 "reserve_cost_up": g.reserve_cost_up, "reserve_cost_down": g.reserve_cost_down,
                 "reserve_cap_up": g.reserve_cap_up, "reserve_cap_down": g.reserve_cap_down}
        if g.load_shed_cap is not None:
            entry["load_shed_cap"] = g.load_shed_cap
        gens.append(entry)
    return {
        "schema_version": case.schema_version,
        "name": case.name,
        "base_mva": case.base_mva,
        "units": "MW",
        "slack_bus": case.slack_bus,
        "buses": [{"id": b.id, "demand": b.demand, "voll": b.voll} for b in case.buses],
        "lines": [{"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "reactance": ln.reactance,
                   "capacity": ln.capacity} for ln in case.lines],
        "generators": gens,
        "scenario_config": scen,
        "solve_config": {"variant": so.variant, "alpha": so.alpha, "method": so.method,
                         "pricing": so.pricing, "tolerance": so.tolerance,
                         "psced_limit": so.psced_limit},
    }


def serialize(case: CaseFile) -> str:
    return json.dumps(case_to_dict(case), indent=2) + "\n"


# --------------------------------------------------------------------------- generators
def synthetic_case(n: int, seed: int = 0, chords: int | None = None,
                   probability_mass: float = 0.3, alpha: float = 0.0) -> CaseFile:
    """Ring of ``n`` buses plus random chords, with randomized economics.

    Every bus can cover its own demand (``gmax >= demand``), so R-SCED is always
    feasible: serving load locally produces zero flows in every scenario.
    """
    if n < 2:
        raise ValueError("synthetic networks need at least two buses")
    rng = np.random.default_rng(seed)
    chords = n // 3 if chords is None else chords
    edges = [(i, (i + 1) % n) for i in range(n if n > 2 else 1)]
    existing = {tuple(sorted(e)) for e in edges}
    attempts = 0
    while chords > 0 and attempts < 50 * n:
        attempts += 1
        a, b = (int(v) for v in rng.choice(n, size=2, replace=False))
        key = (min(a, b), max(a, b))
        if key in existing:
            continue
        existing.add(key)
        edges.append(key)
        chords -= 1
    demand = rng.uniform(10.0, 100.0, n).round(2)
    buses = tuple(Bus(i, float(demand[i]), round(float(rng.uniform(50.0, 500.0)), 1))
                  for i in range(n))
    lines = tuple(Line(i, a, b, round(float(rng.uniform(0.05, 1.0)), 3),
                       round(float(rng.uniform(15.0, 120.0)), 1))
                  for i, (a, b) in enumerate(edges))
    gens = []
    for i in range(n):
        cost = round(float(rng.uniform(1.0, 50.0)), 2)
        gmax = round(float(demand[i] * rng.uniform(1.0, 3.0)), 2)
        cap = round(0.25 * gmax, 2)
        gens.append(GeneratorSpec(i, cost, 0.0, gmax, round(1.2 * cost, 4), round(1.2 * cost, 4),
                                  cap, cap))
    net = Network(buses, lines, tuple(gens))
    K = sum(1 for ln in lines if net.is_connected_without([ln.id]))
    p = round(probability_mass / K, 6) if K else 0.0
    return CaseFile(f"synthetic_n{n}_s{seed}", buses, lines, tuple(gens), 0, 100.0,
                    ScenarioConfig("all_single_lines", p, (), 1.8, 1.2),
                    SolveConfig("rsced", alpha))


def fig3_case(line23_capacity: float = 50.0, reserve_cost_factor: float = 1.2,
              reserve_cap: float = 20.0, name: str = "case3_fig3") -> CaseFile:
    """The 3-bus triangle, calibrated to reproduce the published dispatch tables."""
    costs = (5.0, 1.2, 10.0)
    buses = (Bus(0, 110.0, 30.0), Bus(1, 110.0, 30.0), Bus(2, 95.0, 30.0))
    lines = (Line(0, 0, 1, 0.9, 9000.0), Line(1, 0, 2, 0.62, 9000.0),
             Line(2, 1, 2, 0.75, line23_capacity))
    gens = tuple(GeneratorSpec(i, c, 0.0, 200.0, round(reserve_cost_factor * c, 10),
                               round(reserve_cost_factor * c, 10), reserve_cap, reserve_cap)
                 for i, c in enumerate(costs))
    return CaseFile(name, buses, lines, gens, 0, 100.0,
                    ScenarioConfig("all_single_lines", 0.1, (), 1.8, 1.2), SolveConfig())


def two_bus_case() -> CaseFile:
    """Cheap generator behind a 50 MW line feeding an expensive load bus."""
    buses = (Bus(0, 0.0, 1000.0), Bus(1, 100.0, 1000.0))
    lines = (Line(0, 0, 1, 0.5, 50.0),)
    gens = (GeneratorSpec(0, 10.0, 0.0, 200.0, 12.0, 12.0, 0.0, 0.0),
            GeneratorSpec(1, 30.0, 0.0, 200.0, 36.0, 36.0, 0.0, 0.0))
    return CaseFile("case2_congested", buses, lines, gens, 0, 100.0,
                    ScenarioConfig("none", 0.0, (), 1.0, 1.0), SolveConfig(variant="ed"))
