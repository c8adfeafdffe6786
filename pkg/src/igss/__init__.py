"""Rule discovery for agent-based models via genetic programming.

Evolves agent behaviour rules (expression trees) until a model's macro
output matches a reference dataset, then prunes the winners down to an
interpretable core.  Ships two case studies: hawk-dove resource contention
and the civil-disobedience (rebellion) model.
"""

from .backend import BACKEND_NAME, Program, compile_program, eval_batch
from .expr import (
    EvalError,
    Expr,
    Grammar,
    ParseError,
    Rule,
    binary,
    const,
    depth,
    eval_expr,
    eval_rule,
    parse,
    parse_rule,
    random_expr,
    random_rule,
    render,
    render_rule,
    size,
    unary,
    var,
)
from .gp import (
    EvolutionResult,
    FitnessError,
    GPConfig,
    Individual,
    crossover,
    derive_seed,
    evolve,
    init_population,
    mutate,
    select_proportional,
)
from .refdata import (
    DataError,
    ReferenceDataset,
    balanced_accuracy,
    gini,
    load_csv,
    mse,
    save_csv,
)
from .simplify import (
    equivalent_sampled,
    prune,
    prune_rule,
    prune_rule_with_ranges,
    prune_with_ranges,
)

__version__ = "0.1.0"
