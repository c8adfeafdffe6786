"""Generational genetic-programming engine.

The engine is deliberately plain: score everyone, copy a few elites, then
fill the next generation by fitness-proportional selection feeding
reproduction, subtree mutation and subtree crossover.  All randomness flows
from a single master seed through named, hashed sub-streams, so a run is
bit-reproducible and — because every individual's evaluation seed depends
only on (master seed, generation, slot) — results are identical no matter
how many workers score fitness concurrently.
"""

from __future__ import annotations

import csv
import hashlib
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

from .expr import (
    Expr,
    Grammar,
    Rule,
    node_depth_at,
    random_expr,
    random_rule,
    render_rule,
    replace_at,
    rule_depth,
    size,
)
from .simplify import prune_rule

FitnessFn = Callable[[Rule, int], float]


class FitnessError(Exception):
    """A fitness function failed; the message names the offending rule."""


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit stream seed from a master seed and a label path."""
    text = repr((int(master_seed),) + tuple(parts)).encode()
    digest = hashlib.blake2b(text, digest_size=8).digest()
    return int.from_bytes(digest, "big") & 0x7FFFFFFFFFFFFFFF


@dataclass
class Individual:
    rule: Rule
    fitness: Optional[float] = None


@dataclass(frozen=True)
class GPConfig:
    population_size: int = 200
    max_generations: int = 50
    p_reproduce: float = 0.1
    p_mutate: float = 0.2
    p_crossover: float = 0.7
    elitism: int = 1
    max_depth: int = 8
    master_seed: int = 1
    target_fitness: Optional[float] = None
    stagnation_limit: Optional[int] = None

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        total = self.p_reproduce + self.p_mutate + self.p_crossover
        if abs(total - 1.0) > 1e-12:
            raise ValueError("operator probabilities must sum to 1")
        if min(self.p_reproduce, self.p_mutate, self.p_crossover) < 0:
            raise ValueError("operator probabilities must be non-negative")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must be in [0, population_size)")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_rule: str


@dataclass
class EvolutionResult:
    """Everything needed to report and reproduce a run."""

    log: list[GenerationStats]
    hall_of_fame: list[tuple[float, Rule]]
    best_rule: Rule
    best_fitness: float
    best_rule_pruned: Rule
    master_seed: int
    evaluations: int
    stop_reason: str
    operator_counts: dict[str, int] = field(default_factory=dict)

    def write_generations_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["generation", "best_fitness", "mean_fitness",
                             "best_rule"])
            for row in self.log:
                writer.writerow([row.generation,
                                 f"{row.best_fitness:.9g}",
                                 f"{row.mean_fitness:.9g}",
                                 row.best_rule])

    def write_hall_of_fame(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# hall of fame: rule per line; raw then pruned\n")
            for fitness, rule in self.hall_of_fame:
                fh.write(f"# fitness={fitness:.9g}\n")
                fh.write(render_rule(rule) + "\n")
                fh.write(f"# pruned: {render_rule(prune_rule(rule))}\n")


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def init_population(config: GPConfig, grammar: Grammar,
                    classifier: bool = True) -> list[Individual]:
    """Population of random, unscored individuals from per-slot seed streams."""
    population = []
    for slot in range(config.population_size):
        rng = random.Random(derive_seed(config.master_seed, "init", slot))
        population.append(Individual(random_rule(grammar, rng, classifier)))
    return population


def select_proportional(fitnesses, rng: random.Random) -> int:
    """Roulette-wheel index draw; uniform fallback when all fitness is zero."""
    if len(fitnesses) == 0:
        raise ValueError("cannot select from an empty population")
    total = float(sum(fitnesses))
    if total <= 0.0:
        return rng.randrange(len(fitnesses))
    pick = rng.random() * total
    acc = 0.0
    for i, f in enumerate(fitnesses):
        acc += f
        if pick < acc:
            return i
    return len(fitnesses) - 1


def _pick_node(rule: Rule, rng: random.Random) -> tuple[int, int]:
    """Uniform (part index, node index within part) over a genome's nodes."""
    sizes = [size(p) for p in rule.parts()]
    flat = rng.randrange(sum(sizes))
    for part_idx, part_size in enumerate(sizes):
        if flat < part_size:
            return part_idx, flat
        flat -= part_size
    raise AssertionError


def mutate(rule: Rule, grammar: Grammar, rng: random.Random) -> Rule:
    """Replace one uniformly chosen node with a fresh subtree.

    The replacement is grown within the remaining depth budget, so mutants
    never exceed the grammar's depth bound.
    """
    part_idx, node_idx = _pick_node(rule, rng)
    part = rule.parts()[part_idx]
    d = node_depth_at(part, node_idx)
    budget = grammar.max_depth - d + 1
    sub = random_expr(grammar, rng, target_depth=budget, method="grow")
    return rule.replace_part(part_idx, replace_at(part, node_idx, sub))


def _swap_subtrees(a: Rule, b: Rule, rng: random.Random) -> tuple[Rule, Rule]:
    pa, ia = _pick_node(a, rng)
    pb, ib = _pick_node(b, rng)
    sub_a = _subtree(a.parts()[pa], ia)
    sub_b = _subtree(b.parts()[pb], ib)
    child_a = a.replace_part(pa, replace_at(a.parts()[pa], ia, sub_b))
    child_b = b.replace_part(pb, replace_at(b.parts()[pb], ib, sub_a))
    return child_a, child_b


def _subtree(expr: Expr, index: int) -> Expr:
    from .expr import node_at

    return node_at(expr, index)


def crossover(a: Rule, b: Rule, rng: random.Random,
              max_depth: int = 8, retries: int = 10) -> tuple[Rule, Rule]:
    """Exchange one uniformly chosen subtree between two parents.

    A raw swap conserves total node count.  Children that blow the depth
    bound trigger a re-pick (up to ``retries``); if no legal swap is found
    the parents are returned unchanged.
    """
    for _ in range(retries):
        child_a, child_b = _swap_subtrees(a, b, rng)
        if rule_depth(child_a) <= max_depth and rule_depth(child_b) <= max_depth:
            return child_a, child_b
    return a, b


# ---------------------------------------------------------------------------
# The generational loop
# ---------------------------------------------------------------------------


def _score_population(population, fitness_fn, master_seed, generation, workers,
                      cache):
    """Fill in missing fitness values; deterministic for any worker count."""
    todo = [(slot, ind) for slot, ind in enumerate(population)
            if ind.fitness is None]

    def run_one(slot_ind):
        slot, ind = slot_ind
        seed = derive_seed(master_seed, "eval", generation, slot)
        try:
            value = fitness_fn(ind.rule, seed)
        except Exception as exc:
            raise FitnessError(
                f"fitness evaluation failed for rule "
                f"{render_rule(ind.rule)!r}: {exc}") from exc
        if not (isinstance(value, (int, float)) and math.isfinite(value)
                and value >= 0.0):
            raise FitnessError(
                f"fitness must be finite and >= 0, got {value!r} for rule "
                f"{render_rule(ind.rule)!r}")
        return float(value)

    evaluations = 0
    if cache is not None:
        # Deterministic fitness: evaluate each distinct rule text once.
        unique: dict[str, tuple[int, Individual]] = {}
        for slot, ind in todo:
            unique.setdefault(render_rule(ind.rule), (slot, ind))
        pending = [item for item in unique.items() if item[0] not in cache]
        if workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(run_one, [p[1] for p in pending]))
        else:
            values = [run_one(p[1]) for p in pending]
        for (text, _), value in zip(pending, values):
            cache[text] = value
        evaluations += len(pending)
        for slot, ind in todo:
            ind.fitness = cache[render_rule(ind.rule)]
    else:
        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(run_one, todo))
        else:
            values = [run_one(item) for item in todo]
        evaluations += len(values)
        for (slot, ind), value in zip(todo, values):
            ind.fitness = value
    return evaluations


def evolve(
    config: GPConfig,
    grammar: Grammar,
    fitness_fn: FitnessFn,
    classifier: bool = True,
    workers: int = 1,
    deterministic_fitness: bool = False,
    hall_of_fame_size: int = 10,
) -> EvolutionResult:
    """Run the full generational loop and return the result manifest.

    ``fitness_fn(rule, seed)`` must be pure given its arguments and safe to
    call concurrently.  When ``deterministic_fitness`` is set the seed is
    assumed irrelevant and duplicate rule texts are scored once.
    """
    population = init_population(config, grammar, classifier)
    log: list[GenerationStats] = []
    hof: dict[str, tuple[float, Rule]] = {}
    cache: Optional[dict[str, float]] = {} if deterministic_fitness else None
    operator_counts = {"reproduce": 0, "mutate": 0, "crossover": 0}
    evaluations = 0
    best_so_far = -1.0
    stagnant = 0
    stop_reason = "max_generations"

    for generation in range(1, config.max_generations + 1):
        evaluations += _score_population(
            population, fitness_fn, config.master_seed, generation, workers,
            cache)

        fitnesses = [ind.fitness for ind in population]
        best_slot = max(range(len(population)),
                        key=lambda i: (fitnesses[i], -i))
        best = population[best_slot]
        mean = sum(fitnesses) / len(fitnesses)
        log.append(GenerationStats(generation, best.fitness, mean,
                                   render_rule(best.rule)))

        for ind in population:
            text = render_rule(ind.rule)
            seen = hof.get(text)
            if seen is None or ind.fitness > seen[0]:
                hof[text] = (ind.fitness, ind.rule)

        if best.fitness > best_so_far:
            best_so_far = best.fitness
            stagnant = 0
        else:
            stagnant += 1

        if (config.target_fitness is not None
                and best.fitness >= config.target_fitness):
            stop_reason = "target_fitness"
            break
        if (config.stagnation_limit is not None
                and stagnant >= config.stagnation_limit):
            stop_reason = "stagnation"
            break
        if generation == config.max_generations:
            break

        rng = random.Random(derive_seed(config.master_seed, "breed", generation))
        order = sorted(range(len(population)),
                       key=lambda i: (-fitnesses[i], i))
        next_population = [Individual(population[i].rule, population[i].fitness)
                           for i in order[:config.elitism]]
        while len(next_population) < config.population_size:
            draw = rng.random()
            if draw < config.p_reproduce:
                operator_counts["reproduce"] += 1
                parent = population[select_proportional(fitnesses, rng)]
                next_population.append(Individual(parent.rule, parent.fitness))
            elif draw < config.p_reproduce + config.p_mutate:
                operator_counts["mutate"] += 1
                parent = population[select_proportional(fitnesses, rng)]
                next_population.append(
                    Individual(mutate(parent.rule, grammar, rng)))
            else:
                operator_counts["crossover"] += 1
                pa = population[select_proportional(fitnesses, rng)]
                pb = population[select_proportional(fitnesses, rng)]
                ca, cb = crossover(pa.rule, pb.rule, rng, config.max_depth)
                next_population.append(Individual(ca))
                if len(next_population) < config.population_size:
                    next_population.append(Individual(cb))
        population = next_population

    ranked = sorted(hof.items(), key=lambda kv: (-kv[1][0], kv[0]))
    hall = [(fitness, rule) for _, (fitness, rule) in
            ranked[:hall_of_fame_size]]
    best_fitness, best_rule = hall[0]
    return EvolutionResult(
        log=log,
        hall_of_fame=hall,
        best_rule=best_rule,
        best_fitness=best_fitness,
        best_rule_pruned=prune_rule(best_rule),
        master_seed=config.master_seed,
        evaluations=evaluations,
        stop_reason=stop_reason,
        operator_counts=operator_counts,
    )
