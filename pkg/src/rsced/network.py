"""Grid data model and DC power-flow sensitivities.

Directed flow convention: every line contributes two rows to an ISF matrix,
the first ``ell`` rows carry from->to flow and rows ``ell..2*ell-1`` are their
negations, so a single ``H @ x <= f`` bounds flow in both directions.

ISF entries depend on the slack choice; LMPs, duals and settlements do not.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import IslandedNetwork, ProbabilityMassExceeded, SingularMatrix

logger = logging.getLogger(__name__)

_COND_LIMIT = 1e12
_ZERO_SNAP = 1e-13


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float
    voll: float = 0.0

    def __post_init__(self):
        if self.demand < 0:
            raise ValueError(f"bus {self.id}: demand must be nonnegative, got {self.demand}")
        if self.voll < 0:
            raise ValueError(f"bus {self.id}: voll must be nonnegative, got {self.voll}")


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    capacity: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValueError(f"line {self.id}: from_bus and to_bus are both {self.from_bus}")
        if not self.reactance > 0:
            raise ValueError(f"line {self.id}: reactance must be positive, got {self.reactance}")
        if not self.capacity > 0:
            raise ValueError(f"line {self.id}: capacity must be positive, got {self.capacity}")


@dataclass(frozen=True)
class GeneratorSpec:
    """One generator per bus. ``load_shed_cap=None`` means "up to the bus demand"."""

    bus: int
    cost: float = 0.0
    gmin: float = 0.0
    gmax: float = 0.0
    reserve_cost_up: float = 0.0
    reserve_cost_down: float = 0.0
    reserve_cap_up: float = 0.0
    reserve_cap_down: float = 0.0
    load_shed_cap: float | None = None

    def __post_init__(self):
        if self.gmin > self.gmax:
            raise ValueError(f"generator at bus {self.bus}: gmin {self.gmin} > gmax {self.gmax}")
        for name in ("cost", "reserve_cost_up", "reserve_cost_down",
                     "reserve_cap_up", "reserve_cap_down"):
            if getattr(self, name) < 0:
                raise ValueError(f"generator at bus {self.bus}: {name} must be nonnegative")
        if self.load_shed_cap is not None and self.load_shed_cap < 0:
            raise ValueError(f"generator at bus {self.bus}: load_shed_cap must be nonnegative")


def _components(n: int, edges: Iterable[tuple[int, int]]) -> int:
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    count = 0
    for start in range(n):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
    return count


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[GeneratorSpec, ...] = ()
    slack_bus: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        n = len(self.buses)
        if n == 0:
            raise ValueError("network has no buses")
        for i, bus in enumerate(self.buses):
            if bus.id != i:
                raise ValueError(f"bus ids must be 0..n-1 in order; position {i} has id {bus.id}")
        for i, line in enumerate(self.lines):
            if line.id != i:
                raise ValueError(f"line ids must be 0..l-1 in order; position {i} has id {line.id}")
            for end in (line.from_bus, line.to_bus):
                if not 0 <= end < n:
                    raise ValueError(f"line {line.id} references unknown bus {end}")
        if not 0 <= self.slack_bus < n:
            raise ValueError(f"slack bus {self.slack_bus} is not a bus id")
        by_bus: dict[int, GeneratorSpec] = {}
        for gen in self.generators:
            if not 0 <= gen.bus < n:
                raise ValueError(f"generator references unknown bus {gen.bus}")
            if gen.bus in by_bus:
                raise ValueError(f"more than one generator at bus {gen.bus}")
            by_bus[gen.bus] = gen
        # buses without generation get a zero-capacity unit so every vector has length n
        gens = tuple(by_bus.get(i, GeneratorSpec(bus=i)) for i in range(n))
        object.__setattr__(self, "generators", gens)
        if _components(n, ((ln.from_bus, ln.to_bus) for ln in self.lines)) != 1:
            raise IslandedNetwork("network graph is not connected")

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def ell(self) -> int:
        return len(self.lines)

    # vector views, all length n unless noted
    @property
    def demand(self) -> np.ndarray:
        return np.array([b.demand for b in self.buses], dtype=float)

    @property
    def voll(self) -> np.ndarray:
        return np.array([b.voll for b in self.buses], dtype=float)

    @property
    def cost(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators], dtype=float)

    @property
    def gmin(self) -> np.ndarray:
        return np.array([g.gmin for g in self.generators], dtype=float)

    @property
    def gmax(self) -> np.ndarray:
        return np.array([g.gmax for g in self.generators], dtype=float)

    @property
    def reserve_cost_up(self) -> np.ndarray:
        return np.array([g.reserve_cost_up for g in self.generators], dtype=float)

    @property
    def reserve_cost_down(self) -> np.ndarray:
        return np.array([g.reserve_cost_down for g in self.generators], dtype=float)

    @property
    def reserve_cap_up(self) -> np.ndarray:
        return np.array([g.reserve_cap_up for g in self.generators], dtype=float)

    @property
    def reserve_cap_down(self) -> np.ndarray:
        return np.array([g.reserve_cap_down for g in self.generators], dtype=float)

    @property
    def load_shed_cap(self) -> np.ndarray:
        return np.array([b.demand if g.load_shed_cap is None else g.load_shed_cap
                         for b, g in zip(self.buses, self.generators)], dtype=float)

    @property
    def capacity(self) -> np.ndarray:
        """Undirected line ratings, length ell."""
        return np.array([ln.capacity for ln in self.lines], dtype=float)

    def is_connected_without(self, removed: Iterable[int]) -> bool:
        removed = set(removed)
        edges = ((ln.from_bus, ln.to_bus) for ln in self.lines if ln.id not in removed)
        return _components(self.n, edges) == 1

    def replace(self, **changes) -> "Network":
        fields = dict(buses=self.buses, lines=self.lines, generators=self.generators,
                      slack_bus=self.slack_bus, name=self.name)
        fields.update(changes)
        return Network(**fields)


def build_isf(network: Network, removed_lines: Iterable[int] = ()) -> np.ndarray:
    """Directed injection-shift factors (2*ell x n) for the network minus ``removed_lines``.

    Column ``j`` gives directed line flows for a unit injection at bus ``j``
    withdrawn at the slack bus, so the slack column is zero. Rows of removed
    lines are zero.
    """
    removed = set(removed_lines)
    unknown = removed.difference(range(network.ell))
    if unknown:
        raise ValueError(f"unknown line ids {sorted(unknown)}")
    if not network.is_connected_without(removed):
        raise IslandedNetwork(f"removing lines {sorted(removed)} islands the network")

    n, ell, s = network.n, network.ell, network.slack_bus
    incidence = np.zeros((ell, n))
    susceptance = np.zeros(ell)
    for ln in network.lines:
        if ln.id in removed:
            continue
        incidence[ln.id, ln.from_bus] = 1.0
        incidence[ln.id, ln.to_bus] = -1.0
        susceptance[ln.id] = 1.0 / ln.reactance
    bbus = incidence.T @ (susceptance[:, None] * incidence)
    keep = np.array([i for i in range(n) if i != s], dtype=int)
    reduced = bbus[np.ix_(keep, keep)]
    if keep.size:
        if np.linalg.cond(reduced) > _COND_LIMIT:
            raise SingularMatrix("reduced susceptance matrix is numerically singular")
        x_red = np.linalg.inv(reduced)
    else:
        x_red = np.zeros((0, 0))
    angles = np.zeros((n, n))
    angles[np.ix_(keep, keep)] = x_red
    flows = (susceptance[:, None] * incidence) @ angles
    # structural zeros come back as ~1e-17 round-off; snap them so LP scaling is not fooled
    flows[np.abs(flows) < _ZERO_SNAP] = 0.0
    return np.vstack([flows, -flows])


def directed_limits(network: Network, multiplier: float = 1.0) -> np.ndarray:
    """Stacked ``[f; f] * multiplier`` matching directed ISF row order."""
    if not multiplier > 0:
        raise ValueError(f"limit multiplier must be positive, got {multiplier}")
    f = network.capacity * multiplier
    return np.concatenate([f, f])


@dataclass(frozen=True)
class Contingency:
    id: int
    removed_lines: frozenset[int]
    probability: float
    da_multiplier: float = 1.0
    se_multiplier: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "removed_lines", frozenset(self.removed_lines))
        if not self.removed_lines:
            raise ValueError(f"contingency {self.id} removes no lines")
        # p = 0 is allowed so probability sweeps can start from an inactive outage
        if not 0.0 <= self.probability < 1.0:
            raise ValueError(f"contingency {self.id}: probability must lie in [0, 1)")
        if not self.da_multiplier >= self.se_multiplier >= 1.0:
            raise ValueError(f"contingency {self.id}: need da_multiplier >= se_multiplier >= 1")


@dataclass(frozen=True)
class ScenarioSet:
    """Contingencies plus their post-outage ISF matrices.

    Removed-line rows of each ``H_k`` are zero and their limits are ``inf``,
    so all matrices share the nominal shape.
    """

    network: Network
    contingencies: tuple[Contingency, ...]
    nominal_isf: np.ndarray
    isf: tuple[np.ndarray, ...]
    warnings: tuple[str, ...] = field(default=())

    @property
    def K(self) -> int:
        return len(self.contingencies)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([c.probability for c in self.contingencies], dtype=float)

    def _limits(self, k: int, multiplier: float) -> np.ndarray:
        lim = directed_limits(self.network, multiplier)
        ell = self.network.ell
        for line in self.contingencies[k].removed_lines:
            lim[line] = lim[line + ell] = math.inf
        return lim

    def limits_da(self, k: int) -> np.ndarray:
        return self._limits(k, self.contingencies[k].da_multiplier)

    def limits_se(self, k: int) -> np.ndarray:
        return self._limits(k, self.contingencies[k].se_multiplier)

    def limits_nominal(self, k: int) -> np.ndarray:
        return self._limits(k, 1.0)

    def with_probability(self, k: int, p: float) -> "ScenarioSet":
        """Copy with contingency ``k`` reweighted; ISF matrices are shared."""
        cons = list(self.contingencies)
        old = cons[k]
        cons[k] = Contingency(old.id, old.removed_lines, p, old.da_multiplier, old.se_multiplier)
        _check_mass(cons)
        return ScenarioSet(self.network, tuple(cons), self.nominal_isf, self.isf, self.warnings)


def _check_mass(contingencies: Sequence[Contingency]) -> None:
    total = math.fsum(c.probability for c in contingencies)
    if total > 1.0 + 1e-12:
        raise ProbabilityMassExceeded(f"contingency probabilities sum to {total:.6g} > 1")


def make_scenarios(network: Network, contingencies: Sequence[Contingency]) -> ScenarioSet:
    """Assemble a ScenarioSet from explicit contingencies, building every ``H_k``."""
    contingencies = tuple(contingencies)
    for k, con in enumerate(contingencies):
        if con.id != k:
            raise ValueError(f"contingency ids must be 0..K-1 in order; position {k} has id {con.id}")
    _check_mass(contingencies)
    nominal = build_isf(network)
    isf = tuple(build_isf(network, con.removed_lines) for con in contingencies)
    return ScenarioSet(network, contingencies, nominal, isf)


def all_single_line_contingencies(network: Network, p: float | Sequence[float] = 0.1,
                                  da_mult: float = 1.0, se_mult: float = 1.0) -> ScenarioSet:
    """One contingency per non-bridge line.

    ``p`` is either a uniform probability or one value per line (entries for
    bridge lines are ignored). Bridges are skipped and reported in ``warnings``.
    """
    per_line = [p] * network.ell if np.isscalar(p) else list(p)
    if len(per_line) != network.ell:
        raise ValueError("need one probability per line")
    contingencies: list[Contingency] = []
    warnings: list[str] = []
    for line in network.lines:
        if not network.is_connected_without([line.id]):
            msg = f"line {line.id} ({line.from_bus}-{line.to_bus}) is a bridge; outage skipped"
            logger.warning(msg)
            warnings.append(msg)
            continue
        contingencies.append(Contingency(len(contingencies), frozenset([line.id]),
                                         float(per_line[line.id]), da_mult, se_mult))
    scen = make_scenarios(network, contingencies)
    return ScenarioSet(network, scen.contingencies, scen.nominal_isf, scen.isf, tuple(warnings))


def no_contingencies(network: Network) -> ScenarioSet:
    return ScenarioSet(network, (), build_isf(network), ())
