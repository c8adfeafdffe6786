"""Civil-disobedience (rebellion) model: simulate, record, classify, compare.

Citizens on a torus grid weigh political grievance against arrest risk and
occasionally erupt into riots; cops arrest rioters on sight.  Three rules
fire in order each tick:

* Rule M — unjailed citizens and cops move to a random free patch in vision;
* Rule A — unjailed citizens riot iff
  ``grievance - riskAversion * estimatedArrestProbability > threshold``;
* Rule C — each cop arrests a random rioter within vision.

Agent state is captured *immediately before* each rule fires (step suffixes
0/1/2), which makes the recorded dataset a supervised-learning target: the
behaviour labels are exactly reproducible from the captured variables.  To
keep that true for Rule C, cops pick their victim from the step-2 snapshot's
rioter set (two cops may seize the same rioter), and Rule A is applied
synchronously from step-1 state.

Evolved replacements for M/A/C plug into the identical engine; with the
ground-truth rules supplied the trace is bit-identical to the original.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import backend
from .expr import ALL_OPS, Expr, Grammar, Rule, render_rule, rule_variables
from .gp import derive_seed
from .refdata import (
    KIND_IDENTIFIER,
    KIND_LABEL,
    KIND_NUMERIC,
    DataError,
    ReferenceDataset,
    balanced_accuracy,
)

ID_COLUMNS = ("runId", "tick", "agentId", "breed")
STEP_VARS = (
    "jailTerm",
    "active",
    "movementTracker",
    "freeNeighborhood",
    "copsOnNeighborhood",
    "activesOnNeighborhood",
    "quietOnNeighborhood",
    "agentsOnNeighborhood",
    "estimatedArrestProbability",
)
SINGLE_VARS = (
    "grievance",
    "perceivedHardship",
    "riskAversion",
    "governmentLegitimacy",
    "threshold",
    "vision",
    "maxJailTerm",
    "arrestConstant",
    "citizenCount",
    "copCount",
    "patchCount",
)
LABEL_COLUMNS = ("movedLabel", "activeLabel", "enforcedLabel")

SNAPSHOT_COLUMNS = (
    list(ID_COLUMNS)
    + [f"{name}{step}" for name in STEP_VARS for step in (0, 1, 2)]
    + list(SINGLE_VARS)
    + list(LABEL_COLUMNS)
)
SNAPSHOT_KINDS = (
    [KIND_IDENTIFIER] * len(ID_COLUMNS)
    + [KIND_NUMERIC] * (len(STEP_VARS) * 3 + len(SINGLE_VARS))
    + [KIND_LABEL] * len(LABEL_COLUMNS)
)

BREED_CITIZEN = 0.0
BREED_COP = 1.0

# The model's own decision rules, written over the snapshot schema.  Scored
# against a recorded dataset they are exact: 1.0 balanced accuracy.
GROUND_TRUTH_M = "jailTerm0 <= 0 AND freeNeighborhood0 >= 1"
GROUND_TRUTH_A = ("jailTerm1 <= 0 AND grievance - riskAversion * "
                  "estimatedArrestProbability1 > threshold")
GROUND_TRUTH_C = "activesOnNeighborhood2 >= 1"

LABEL_BREEDS = {"movedLabel": "citizen", "activeLabel": "citizen",
                "enforcedLabel": "cop"}


@dataclass(frozen=True)
class RebConfig:
    grid_width: int = 33
    grid_height: int = 33
    citizen_density: float = 0.70
    cop_density: float = 0.04
    government_legitimacy: float = 0.82
    max_jail_term: int = 30
    vision: int = 7
    threshold: float = 0.1
    arrest_constant: float = 2.3
    ticks: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.grid_width < 1 or self.grid_height < 1:
            raise ValueError("grid dimensions must be positive")
        if not (0 < self.citizen_density and 0 <= self.cop_density
                and self.citizen_density + self.cop_density < 1):
            raise ValueError("densities must be positive and sum below 1 "
                             "(one occupant per patch at placement)")
        if not 0.0 <= self.government_legitimacy <= 1.0:
            raise ValueError("government_legitimacy must lie in [0, 1]")
        if self.max_jail_term < 1 or self.vision < 1 or self.ticks < 1:
            raise ValueError("max_jail_term, vision and ticks must be >= 1")

    @property
    def n_patches(self) -> int:
        return self.grid_width * self.grid_height

    @property
    def n_citizens(self) -> int:
        return int(self.n_patches * self.citizen_density)

    @property
    def n_cops(self) -> int:
        return int(self.n_patches * self.cop_density)


@dataclass
class Trace:
    """Per-tick population counts."""

    quiet: np.ndarray
    active: np.ndarray
    jailed: np.ndarray

    def __post_init__(self):
        self.quiet = np.asarray(self.quiet, dtype=np.int64)
        self.active = np.asarray(self.active, dtype=np.int64)
        self.jailed = np.asarray(self.jailed, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.quiet)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Trace)
                and np.array_equal(self.quiet, other.quiet)
                and np.array_equal(self.active, other.active)
                and np.array_equal(self.jailed, other.jailed))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write("# igss-trace v1\n")
            fh.write("tick,quiet,active,jailed\n")
            for t in range(len(self)):
                fh.write(f"{t + 1},{self.quiet[t]},{self.active[t]},"
                         f"{self.jailed[t]}\n")


def load_trace_csv(path) -> Trace:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("tick"):
                continue
            cells = line.split(",")
            if len(cells) != 4:
                raise DataError(f"trace row needs 4 cells, got {len(cells)}")
            rows.append([int(float(c)) for c in cells[1:]])
    if not rows:
        raise DataError("empty trace file")
    arr = np.asarray(rows, dtype=np.int64)
    return Trace(arr[:, 0], arr[:, 1], arr[:, 2])


# ---------------------------------------------------------------------------
# Neighborhood geometry
# ---------------------------------------------------------------------------

_NEIGHBORHOOD_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def _neighborhood_table(width: int, height: int, vision: int) -> np.ndarray:
    """(n_patches, n_in_radius) patch indices within Euclidean ``vision``.

    The torus-wrapped disc includes the centre patch, mirroring a
    patches-in-radius neighbourhood.
    """
    key = (width, height, vision)
    cached = _NEIGHBORHOOD_CACHE.get(key)
    if cached is not None:
        return cached
    offsets = [(dx, dy)
               for dx in range(-vision, vision + 1)
               for dy in range(-vision, vision + 1)
               if dx * dx + dy * dy <= vision * vision]
    xs = np.arange(width * height) % width
    ys = np.arange(width * height) // width
    table = np.empty((width * height, len(offsets)), dtype=np.int64)
    for j, (dx, dy) in enumerate(offsets):
        table[:, j] = ((ys + dy) % height) * width + (xs + dx) % width
    _NEIGHBORHOOD_CACHE[key] = table
    return table


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


class _RuleProgram:
    """An evolved rule compiled over the snapshot schema, with visibility
    restricted to the variables that exist when its step fires."""

    def __init__(self, rule: Union[Rule, Expr], step: int, label: str):
        rule = rule if isinstance(rule, Rule) else Rule(rule)
        names = rule_variables(rule)
        allowed = set(ID_COLUMNS) | set(SINGLE_VARS)
        for s in range(step + 1):
            allowed |= {f"{v}{s}" for v in STEP_VARS}
        bad = sorted(names - allowed)
        if bad:
            raise DataError(
                f"rule {label} references {bad}, not available at step {step}; "
                f"allowed: identifiers, globals and step suffixes 0..{step}")
        self.program = backend.compile_program(rule, SNAPSHOT_COLUMNS)

    def decide(self, matrix: np.ndarray) -> np.ndarray:
        return backend.eval_batch(self.program, matrix) != 0.0


class _World:
    def __init__(self, config: RebConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        self.nb = _neighborhood_table(config.grid_width, config.grid_height,
                                      config.vision)
        n_cit, n_cops = config.n_citizens, config.n_cops
        self.n_cit, self.n_cops = n_cit, n_cops
        self.n_agents = n_cit + n_cops
        patches = self.rng.sample(range(config.n_patches), self.n_agents)
        self.pos = np.asarray(patches, dtype=np.int64)
        self.occupant = np.full(config.n_patches, -1, dtype=np.int64)
        self.occupant[self.pos] = np.arange(self.n_agents)
        self.breed = np.zeros(self.n_agents)
        self.breed[n_cit:] = 1.0
        self.jail = np.zeros(self.n_agents, dtype=np.int64)
        self.active = np.zeros(self.n_agents, dtype=bool)
        self.moved = np.zeros(self.n_agents, dtype=bool)
        self.hardship = np.zeros(self.n_agents)
        self.risk = np.zeros(self.n_agents)
        for i in range(n_cit):
            self.hardship[i] = self.rng.random()
            self.risk[i] = self.rng.random()
        self.grievance = self.hardship * (1.0 - config.government_legitimacy)

    def capture(self, matrix: np.ndarray, step: int) -> None:
        """Fill the step-``step`` snapshot columns from the live grid."""
        cfg = self.config
        free_grid = (self.occupant < 0).astype(np.float64)
        cop_grid = np.zeros(cfg.n_patches)
        cop_grid[self.pos[self.n_cit:]] = 1.0
        active_grid = np.zeros(cfg.n_patches)
        active_grid[self.pos[self.active]] = 1.0
        quiet_mask = (~self.active) & (self.jail == 0)
        quiet_mask[self.n_cit:] = False
        quiet_grid = np.zeros(cfg.n_patches)
        quiet_grid[self.pos[quiet_mask]] = 1.0
        agent_grid = np.zeros(cfg.n_patches)
        agent_grid[self.pos] = 1.0

        hood = self.nb[self.pos]
        free = free_grid[hood].sum(axis=1)
        cops = cop_grid[hood].sum(axis=1)
        actives = active_grid[hood].sum(axis=1)
        quiet = quiet_grid[hood].sum(axis=1)
        agents = agent_grid[hood].sum(axis=1)
        ratio = np.floor(cops / np.maximum(1.0, actives))
        arrest_p = 1.0 - np.exp(-cfg.arrest_constant * ratio)

        values = {
            "jailTerm": self.jail.astype(np.float64),
            "active": self.active.astype(np.float64),
            "movementTracker": self.moved.astype(np.float64),
            "freeNeighborhood": free,
            "copsOnNeighborhood": cops,
            "activesOnNeighborhood": actives,
            "quietOnNeighborhood": quiet,
            "agentsOnNeighborhood": agents,
            "estimatedArrestProbability": arrest_p,
        }
        for name, column in values.items():
            matrix[_COLUMN_INDEX[f"{name}{step}"]] = column

    def fill_static(self, matrix: np.ndarray, run_id: int, tick: int) -> None:
        cfg = self.config
        matrix[_COLUMN_INDEX["runId"]] = float(run_id)
        matrix[_COLUMN_INDEX["tick"]] = float(tick)
        matrix[_COLUMN_INDEX["agentId"]] = np.arange(self.n_agents)
        matrix[_COLUMN_INDEX["breed"]] = self.breed
        matrix[_COLUMN_INDEX["grievance"]] = self.grievance
        matrix[_COLUMN_INDEX["perceivedHardship"]] = self.hardship
        matrix[_COLUMN_INDEX["riskAversion"]] = self.risk
        matrix[_COLUMN_INDEX["governmentLegitimacy"]] = cfg.government_legitimacy
        matrix[_COLUMN_INDEX["threshold"]] = cfg.threshold
        matrix[_COLUMN_INDEX["vision"]] = float(cfg.vision)
        matrix[_COLUMN_INDEX["maxJailTerm"]] = float(cfg.max_jail_term)
        matrix[_COLUMN_INDEX["arrestConstant"]] = cfg.arrest_constant
        matrix[_COLUMN_INDEX["citizenCount"]] = float(self.n_cit)
        matrix[_COLUMN_INDEX["copCount"]] = float(self.n_cops)
        matrix[_COLUMN_INDEX["patchCount"]] = float(cfg.n_patches)


_COLUMN_INDEX = {name: i for i, name in enumerate(SNAPSHOT_COLUMNS)}


def _run(config: RebConfig,
         rule_m: Optional[_RuleProgram] = None,
         rule_a: Optional[_RuleProgram] = None,
         rule_c: Optional[_RuleProgram] = None,
         record: bool = False,
         run_id: int = 0):
    """Shared engine for the original and evolved-rule models.

    ``None`` rules run the model's native decision; supplied rules replace
    only the decision, never the physical frame (jailed agents stay jailed
    and immobile, arrests need a visible step-2 rioter).
    """
    world = _World(config)
    rng = world.rng
    n_cit, n_agents = world.n_cit, world.n_agents
    quiet_counts = np.zeros(config.ticks, dtype=np.int64)
    active_counts = np.zeros(config.ticks, dtype=np.int64)
    jailed_counts = np.zeros(config.ticks, dtype=np.int64)
    rows = (np.empty((config.ticks * n_agents, len(SNAPSHOT_COLUMNS)))
            if record else None)
    matrix = np.empty((len(SNAPSHOT_COLUMNS), n_agents))

    for tick in range(1, config.ticks + 1):
        world.fill_static(matrix, run_id, tick)

        # --- Rule M: move to a random free patch within vision -------------
        world.capture(matrix, 0)
        if rule_m is not None:
            wants_move = rule_m.decide(matrix)
        else:
            wants_move = np.ones(n_agents, dtype=bool)
        for agent in range(n_agents):
            world.moved[agent] = False
            if world.jail[agent] > 0 or not wants_move[agent]:
                continue
            hood = world.nb[world.pos[agent]]
            free = hood[world.occupant[hood] < 0]
            if len(free) == 0:
                continue
            dest = int(free[rng.randrange(len(free))])
            world.occupant[world.pos[agent]] = -1
            world.occupant[dest] = agent
            world.pos[agent] = dest
            world.moved[agent] = True

        # --- Rule A: riot iff net grievance beats the threshold ------------
        world.capture(matrix, 1)
        if rule_a is not None:
            decide_active = rule_a.decide(matrix)
        else:
            arrest_p = matrix[_COLUMN_INDEX["estimatedArrestProbability1"]]
            decide_active = (world.grievance - world.risk * arrest_p
                             > config.threshold)
        free_citizens = world.jail[:n_cit] == 0
        world.active[:n_cit] = decide_active[:n_cit] & free_citizens
        decided_active = world.active.copy()  # label: A's outcome, pre-arrest

        # --- Rule C: arrest a random rioter from the step-2 snapshot -------
        world.capture(matrix, 2)
        if rule_c is not None:
            wants_arrest = rule_c.decide(matrix)
        else:
            wants_arrest = np.ones(n_agents, dtype=bool)
        snapshot_active = np.flatnonzero(world.active[:n_cit])
        snapshot_pos = world.pos[snapshot_active]
        enforced = np.zeros(n_agents, dtype=bool)
        if len(snapshot_active):
            in_vision = np.zeros(config.n_patches, dtype=bool)
            for cop in range(n_cit, n_agents):
                if not wants_arrest[cop]:
                    continue
                hood = world.nb[world.pos[cop]]
                in_vision[hood] = True
                candidates = snapshot_active[in_vision[snapshot_pos]]
                in_vision[hood] = False
                if len(candidates) == 0:
                    continue
                victim = int(candidates[rng.randrange(len(candidates))])
                world.jail[victim] = rng.randint(1, config.max_jail_term)
                world.active[victim] = False
                enforced[cop] = True

        if record:
            block = rows[(tick - 1) * n_agents: tick * n_agents]
            block[:] = matrix.T
            block[:, _COLUMN_INDEX["movedLabel"]] = world.moved
            block[:, _COLUMN_INDEX["activeLabel"]] = decided_active
            block[:, _COLUMN_INDEX["enforcedLabel"]] = enforced

        jailed = world.jail > 0
        jailed_counts[tick - 1] = int(jailed[:n_cit].sum())
        active_counts[tick - 1] = int(world.active[:n_cit].sum())
        quiet_counts[tick - 1] = n_cit - jailed_counts[tick - 1] - active_counts[tick - 1]

        world.jail = np.maximum(world.jail - 1, 0)

    trace = Trace(quiet_counts, active_counts, jailed_counts)
    if record:
        dataset = ReferenceDataset(list(SNAPSHOT_COLUMNS), list(SNAPSHOT_KINDS),
                                   rows, provenance=f"rebellion run {run_id}")
        return trace, dataset
    return trace


def run_original(config: RebConfig, record: bool = True):
    """Run the native model.  Returns (Trace, snapshot dataset)."""
    if record:
        return _run(config, record=True)
    return _run(config)


def run_evolved(config: RebConfig, rule_m: Union[Rule, Expr],
                rule_a: Union[Rule, Expr], rule_c: Union[Rule, Expr]) -> Trace:
    """Run the engine with all three decisions replaced by evolved rules."""
    return _run(
        config,
        rule_m=_RuleProgram(rule_m, 0, "M"),
        rule_a=_RuleProgram(rule_a, 1, "A"),
        rule_c=_RuleProgram(rule_c, 2, "C"),
    )


def default_record_configs(seed: int = 0,
                           legitimacies: Sequence[float] = (0.82, 0.86, 0.90),
                           **overrides) -> list[RebConfig]:
    """The standard static-dataset recipe: one run per legitimacy setting."""
    return [RebConfig(government_legitimacy=leg,
                      seed=derive_seed(seed, "record", i), **overrides)
            for i, leg in enumerate(legitimacies)]


def record_dataset(configs: Sequence[RebConfig]) -> ReferenceDataset:
    """Concatenate snapshot records from one run per config."""
    if not configs:
        raise DataError("record_dataset needs at least one config")
    blocks = []
    for run_id, config in enumerate(configs):
        _, dataset = _run(config, record=True, run_id=run_id)
        blocks.append(dataset.data)
    data = np.concatenate(blocks, axis=0)
    provenance = "rebellion x" + str(len(configs))
    return ReferenceDataset(list(SNAPSHOT_COLUMNS), list(SNAPSHOT_KINDS),
                            data, provenance)


# ---------------------------------------------------------------------------
# Classification fitness
# ---------------------------------------------------------------------------


def _breed_mask(dataset: ReferenceDataset, breed: str) -> np.ndarray:
    column = dataset.column("breed")
    if breed == "citizen":
        return column == BREED_CITIZEN
    if breed == "cop":
        return column == BREED_COP
    if breed == "all":
        return np.ones(dataset.n_rows, dtype=bool)
    raise DataError(f"unknown breed filter {breed!r}")


_MATRIX_CACHE: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]] = {}


def _filtered_matrix(dataset: ReferenceDataset, breed: str):
    key = (id(dataset), breed)
    hit = _MATRIX_CACHE.get(key)
    if hit is None:
        mask = _breed_mask(dataset, breed)
        matrix = np.ascontiguousarray(dataset.data[mask].T)
        hit = (matrix, mask)
        _MATRIX_CACHE[key] = hit
    return hit


def classify_fitness(rule: Union[Rule, Expr], dataset: ReferenceDataset,
                     label: str, breed: Optional[str] = None,
                     metric: str = "balanced") -> float:
    """Balanced accuracy of a condition rule against a recorded label.

    Predictions are the boolean coercion of the rule's value per row.  Rows
    are restricted to the label's natural breed unless ``breed`` says
    otherwise.  ``metric="plain"`` is available for ablation but the default
    stays balanced: the quiet class dominates these datasets.
    """
    if label not in LABEL_COLUMNS:
        raise DataError(f"{label!r} is not a label column; "
                        f"labels: {', '.join(LABEL_COLUMNS)}")
    rule = rule if isinstance(rule, Rule) else Rule(rule)
    missing = sorted(rule_variables(rule) - set(dataset.columns))
    if missing:
        raise DataError(
            f"rule references unknown columns {missing}; dataset columns: "
            f"{', '.join(dataset.columns)}")
    if breed is None:
        breed = LABEL_BREEDS[label]
    matrix, mask = _filtered_matrix(dataset, breed)
    program = backend.compile_program(rule, dataset.columns)
    predictions = backend.eval_batch(program, matrix) != 0.0
    labels = dataset.column(label)[mask] != 0.0
    if metric == "balanced":
        return balanced_accuracy(predictions, labels)
    if metric == "plain":
        return float(np.count_nonzero(predictions == labels)) / labels.size
    raise DataError(f"unknown metric {metric!r}")


def default_grammar(dataset: ReferenceDataset, step: int,
                    max_depth: int = 8) -> Grammar:
    """Evolution grammar for one rule: globals plus step-<=``step`` variables,
    with value ranges taken from the dataset itself."""
    names = list(SINGLE_VARS)
    for s in range(step + 1):
        names.extend(f"{v}{s}" for v in STEP_VARS)
    variables = {}
    for name in names:
        column = dataset.column(name)
        variables[name] = (float(column.min()), float(column.max()))
    return Grammar(variables=variables, operators=ALL_OPS,
                   real_constants=(0.0, 1.0), max_depth=max_depth)


TASK_STEPS = {"M": 0, "A": 1, "C": 2}
TASK_LABELS = {"M": "movedLabel", "A": "activeLabel", "C": "enforcedLabel"}


# ---------------------------------------------------------------------------
# Trace comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesComparison:
    mean_abs_diff: float
    peaks_a: int
    peaks_b: int
    max_cross_correlation: float


def _count_peaks(series: np.ndarray) -> int:
    """Local maxima above twice the series median (plateaus count once)."""
    threshold = 2.0 * float(np.median(series))
    runs: list[float] = []
    for v in series:
        if not runs or runs[-1] != v:
            runs.append(float(v))
    count = 0
    for i, v in enumerate(runs):
        if v <= threshold:
            continue
        left_ok = i == 0 or runs[i - 1] < v
        right_ok = i == len(runs) - 1 or runs[i + 1] < v
        if left_ok and right_ok:
            count += 1
    return count


def _max_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Best Pearson correlation over lags up to a quarter of the length."""
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    max_lag = max(1, len(a) // 4)
    best = -1.0
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            xs, ys = a[lag:], b[:len(b) - lag]
        else:
            xs, ys = a[:len(a) + lag], b[-lag:]
        if len(xs) < 2:
            continue
        sx, sy = xs.std(), ys.std()
        if sx == 0.0 or sy == 0.0:
            r = 1.0 if (sx == sy and xs.mean() == ys.mean()) else 0.0
        else:
            r = float(np.corrcoef(xs, ys)[0, 1])
        best = max(best, r)
    return best


def compare_traces(a: Trace, b: Trace) -> dict[str, SeriesComparison]:
    """Descriptive comparison per series; makes no pass/fail judgment."""
    if len(a) != len(b):
        raise DataError(f"trace length mismatch: {len(a)} vs {len(b)}")
    out = {}
    for name in ("quiet", "active", "jailed"):
        sa = getattr(a, name)
        sb = getattr(b, name)
        out[name] = SeriesComparison(
            mean_abs_diff=float(np.mean(np.abs(sa - sb))),
            peaks_a=_count_peaks(sa),
            peaks_b=_count_peaks(sb),
            max_cross_correlation=_max_cross_correlation(sa, sb),
        )
    return out
