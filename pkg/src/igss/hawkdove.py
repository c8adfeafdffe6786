"""Hawk-dove resource contention with an evolved take-decision rule.

Agents occupy locations holding a replenishing resource (capacity two agents
per location).  Each tick every agent decides how much to demand via its
rule; if the joint demand at a location exceeds the available resource the
tick is a conflict and everyone there receives nothing, otherwise each agent
takes what it asked for.  Agents return to their location while it pays out
and relocate randomly after receiving zero.  Fitness of a rule is the
closeness of the final wealth distribution to a reference distribution.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import backend
from .expr import ALL_OPS, Grammar, Rule
from .gp import derive_seed
from .refdata import DataError, ReferenceDataset, gini, mse

# Order of the rule-visible situation variables (columns of the eval batch).
VARIABLES = (
    "resource",
    "agents",
    "previousTook",
    "previousResource",
    "previousAgents",
    "totalAgents",
    "totalResource",
)


@dataclass(frozen=True)
class HDConfig:
    """Simulation scale; defaults keep the world crowded enough that greedy
    demands collide while paired one-unit takes never conflict."""

    n_agents: int = 20
    n_locations: int = 11
    resource_per_location: float = 9.0
    ticks: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_locations * 2 < self.n_agents:
            raise ValueError("need n_locations * 2 >= n_agents "
                             "(two agents fit per location)")
        if self.ticks < 1:
            raise ValueError("ticks must be >= 1")
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.resource_per_location <= 0:
            raise ValueError("resource_per_location must be positive")


@dataclass
class HDAgent:
    """Inspection view of one agent's state."""

    id: int
    home_location: int
    total_resource: float
    previous_took: float
    previous_resource: float
    previous_agents: int


@dataclass
class HDWorld:
    config: HDConfig
    rng: random.Random
    tick: int = 1
    home: np.ndarray = field(init=False)
    total: np.ndarray = field(init=False)
    prev_took: np.ndarray = field(init=False)
    prev_resource: np.ndarray = field(init=False)
    prev_agents: np.ndarray = field(init=False)
    must_move: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.config.n_agents
        self.home = np.full(n, -1, dtype=np.int64)
        self.total = np.zeros(n)
        self.prev_took = np.zeros(n)
        self.prev_resource = np.zeros(n)
        self.prev_agents = np.zeros(n, dtype=np.int64)
        self.must_move = np.ones(n, dtype=bool)

    def agents(self) -> list[HDAgent]:
        return [HDAgent(i, int(self.home[i]), float(self.total[i]),
                        float(self.prev_took[i]), float(self.prev_resource[i]),
                        int(self.prev_agents[i]))
                for i in range(self.config.n_agents)]


def new_world(config: HDConfig) -> HDWorld:
    return HDWorld(config, random.Random(config.seed))


def _step(world: HDWorld, program: backend.Program) -> None:
    cfg = world.config
    n, n_loc = cfg.n_agents, cfg.n_locations
    supply = cfg.resource_per_location

    # Phase 1: placement.  Stayers keep their location; agents who received
    # zero last tick (or have no location yet) pick a random location with
    # spare capacity, excluding their current one.
    occupancy = np.zeros(n_loc, dtype=np.int64)
    for agent in range(n):
        if not world.must_move[agent] and world.home[agent] >= 0:
            occupancy[world.home[agent]] += 1
    for agent in range(n):
        if not world.must_move[agent] and world.home[agent] >= 0:
            continue
        current = world.home[agent]
        open_locs = np.flatnonzero(occupancy < 2)
        if current >= 0:
            open_locs = open_locs[open_locs != current]
        if len(open_locs) == 0:
            if current < 0:
                raise RuntimeError("no location can admit the agent")
            occupancy[current] += 1  # nowhere to go: stay put
            continue
        chosen = int(open_locs[world.rng.randrange(len(open_locs))])
        world.home[agent] = chosen
        occupancy[chosen] += 1

    # Phase 2: decisions from each agent's situation variables.
    cols = np.empty((len(VARIABLES), n))
    cols[0] = supply
    cols[1] = occupancy[world.home]
    cols[2] = world.prev_took
    cols[3] = world.prev_resource
    cols[4] = world.prev_agents
    cols[5] = float(n)
    cols[6] = world.total
    demands = np.clip(backend.eval_batch(program, cols), 0.0, supply)

    # Phase 3: conflict resolution per location.
    demand_sum = np.bincount(world.home, weights=demands, minlength=n_loc)
    conflicted = demand_sum > supply
    received = np.where(conflicted[world.home], 0.0, demands)

    # Phase 4: history update; locations replenish for the next tick.
    world.total += received
    taken = np.bincount(world.home, weights=received, minlength=n_loc)
    world.prev_took = received
    world.prev_resource = (supply - taken)[world.home]
    world.prev_agents = occupancy[world.home]
    world.must_move = received == 0.0
    world.tick += 1


def step(world: HDWorld, rule: Rule) -> HDWorld:
    """Advance the world one tick under ``rule`` (mutates and returns it)."""
    _step(world, backend.compile_program(rule, VARIABLES))
    return world


def run(config: HDConfig, rule: Rule) -> np.ndarray:
    """Full simulation; returns the sorted final wealth distribution."""
    program = backend.compile_program(rule, VARIABLES)
    world = new_world(config)
    for _ in range(config.ticks):
        _step(world, program)
    return np.sort(world.total)


def hd_fitness(rule: Rule, reference: Sequence[float], config: HDConfig,
               n_repeats: int = 3, master_seed: Optional[int] = None) -> float:
    """Mean-squared-error fitness mapped into (0, 1]; 1.0 iff exact match.

    The simulation is stochastic (relocation), so the score averages MSE over
    ``n_repeats`` runs on seeds derived from ``master_seed`` (defaulting to
    the config seed).
    """
    reference = np.sort(np.asarray(reference, dtype=np.float64))
    if reference.shape != (config.n_agents,):
        raise DataError(
            f"reference length {reference.shape[0]} != n_agents {config.n_agents}")
    base = config.seed if master_seed is None else master_seed
    total = 0.0
    for repeat in range(n_repeats):
        seeded = HDConfig(config.n_agents, config.n_locations,
                          config.resource_per_location, config.ticks,
                          derive_seed(base, "hd-run", repeat))
        total += mse(run(seeded, rule), reference)
    return 1.0 / (1.0 + total / n_repeats)


# ---------------------------------------------------------------------------
# Reference distributions
# ---------------------------------------------------------------------------


def make_reference(kind: str, config: HDConfig, **params) -> np.ndarray:
    """Build a manually specified target wealth distribution.

    ``equality``: every agent at ``value`` (default one unit per tick).
    ``twoTier``: ``split`` of society at ``low``, the rest at ``high``.
    ``paretoLike``: heavy-tailed Lorenz-share curve with Gini set by
    ``shape``; a target to aim at, not necessarily a reachable outcome.
    """
    n = config.n_agents
    if kind == "equality":
        value = float(params.pop("value", config.ticks))
        _reject_extra(params)
        if value < 0:
            raise ValueError("equality value must be >= 0")
        return np.full(n, value)
    if kind == "twoTier":
        low = float(params.pop("low", 100.0))
        high = float(params.pop("high", 900.0))
        split = float(params.pop("split", 0.5))
        _reject_extra(params)
        if not 0.0 <= split <= 1.0:
            raise ValueError("split must be a fraction in [0, 1]")
        if low > high:
            raise ValueError("low tier must not exceed high tier")
        n_low = round(n * split)
        return np.sort(np.concatenate([np.full(n_low, low),
                                       np.full(n - n_low, high)]))
    if kind == "paretoLike":
        shape = float(params.pop("shape", 1.16))
        total = float(params.pop("total", n * config.ticks))
        _reject_extra(params)
        if shape <= 1.0 or total <= 0:
            raise ValueError("shape must exceed 1 and total must be positive")
        # Each agent holds its band's share of total wealth under the
        # Pareto Lorenz curve, which keeps the tail (and hence the Gini)
        # faithful at small n.
        bands = np.arange(0, n + 1) / n
        lorenz = 1.0 - (1.0 - bands) ** (1.0 - 1.0 / shape)
        return np.sort(np.diff(lorenz) * total)
    raise ValueError(f"unknown reference kind {kind!r}")


def _reject_extra(params: dict) -> None:
    if params:
        raise ValueError(f"unknown reference parameters: {sorted(params)}")


def reference_as_dataset(values: np.ndarray, provenance: str) -> ReferenceDataset:
    return ReferenceDataset(["total_resource"], ["numeric"],
                            np.asarray(values, dtype=np.float64).reshape(-1, 1),
                            provenance)


def histogram(values: Sequence[float], bins: int = 10) -> list[tuple[float, float, int]]:
    """Equal-width histogram rows (bin_low, bin_high, count) for plotting."""
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i]))
            for i in range(len(counts))]


# ---------------------------------------------------------------------------
# Grammar and pruning ranges
# ---------------------------------------------------------------------------


def variable_ranges(config: HDConfig) -> dict[str, tuple[float, float]]:
    """Envelope of every value each variable can take at decision time."""
    supply = config.resource_per_location
    return {
        "resource": (supply, supply),  # replenished before every decision
        "agents": (1.0, 2.0),
        "previousTook": (0.0, supply),
        "previousResource": (0.0, supply),
        "previousAgents": (0.0, 2.0),
        "totalAgents": (float(config.n_agents), float(config.n_agents)),
        "totalResource": (0.0, config.ticks * supply),
    }


def equality_context_ranges(config: HDConfig) -> dict[str, tuple[float, float]]:
    """Variable ranges describing the equality scenario's steady state.

    When every agent takes one unit per tick, takes stay in [0, 1] and
    cumulative wealth in [0, ticks].  Pruning a rule evolved against the
    equality target with these ranges mirrors how a modeller simplifies it
    "given the amount of resource and the number of agents": comparisons that
    are vacuous in that context fold away.
    """
    ranges = variable_ranges(config)
    ranges["previousTook"] = (0.0, 1.0)
    ranges["totalResource"] = (0.0, float(config.ticks))
    return ranges


def default_grammar(config: HDConfig, max_depth: int = 8) -> Grammar:
    """Rule-language grammar: the seven situation variables plus small ints."""
    return Grammar(
        variables=variable_ranges(config),
        operators=ALL_OPS,
        int_constants=(0, 9),
        max_depth=max_depth,
    )


def gini_of(values: Sequence[float]) -> float:
    return gini(values)
