"""Rule pruning: algebraic simplification and interval-based folding.

Evolved rules are usually bloated with redundant subtrees.  :func:`prune`
removes redundancy that holds for *all* bindings (constant folding, ``x - x``,
comparisons of identical subtrees, short-circuit constants).  For reductions
that rely on domain knowledge — "this comparison is always true because the
variables can only take these values" — :func:`prune_with_ranges` propagates
per-variable intervals and folds comparisons whose operand intervals decide
the outcome.

All folds are value-exact under the evaluator's semantics (saturating
arithmetic, protected division), so pruned rules evaluate to exactly the same
numbers as the originals, not merely "close" ones.
"""

from __future__ import annotations

import random
from typing import Mapping, Optional, Union

from .expr import (
    CMP_OPS,
    CONST,
    VALUE_LIMIT,
    VAR,
    Expr,
    Rule,
    const,
    eval_expr,
    eval_rule,
    rule_variables,
    variables_of,
)

Interval = tuple[float, float]


# ---------------------------------------------------------------------------
# Range-free simplification
# ---------------------------------------------------------------------------


def _is_const(e: Expr, value: Optional[float] = None) -> bool:
    if e.op != CONST:
        return False
    return value is None or e.value == value


def _simplify_node(e: Expr) -> Expr:
    """One bottom-up rewrite of ``e`` whose children are already simplified."""
    op = e.op
    if op in (CONST, VAR):
        return e
    if all(c.op == CONST for c in e.children):
        return const(eval_expr(e, {}))
    if op == "NEG":
        child = e.children[0]
        if child.op == "NEG":
            return child.children[0]
        return e
    if op == "NOT":
        return e
    a, b = e.children
    if op == "-":
        if a == b:
            return const(0.0)
        if _is_const(b, 0.0):
            return a
        return e
    if op == "+":
        if _is_const(b, 0.0):
            return a
        if _is_const(a, 0.0):
            return b
        return e
    if op == "*":
        if _is_const(a, 0.0) or _is_const(b, 0.0):
            return const(0.0)
        if _is_const(b, 1.0):
            return a
        if _is_const(a, 1.0):
            return b
        return e
    if op == "/":
        # x / x = 1 for every x: nonzero divides to 1, zero divisor is the
        # protected case which also yields 1.
        if a == b:
            return const(1.0)
        if _is_const(b, 0.0):
            return const(1.0)
        if _is_const(b, 1.0):
            return a
        return e
    if op in CMP_OPS:
        if a == b:
            return const(1.0) if op in ("==", "<=", ">=") else const(0.0)
        return e
    if op == "AND":
        if (_is_const(a) and a.value == 0.0) or (_is_const(b) and b.value == 0.0):
            return const(0.0)
        return e
    if op == "OR":
        if (_is_const(a) and a.value != 0.0) or (_is_const(b) and b.value != 0.0):
            return const(1.0)
        return e
    return e


def _simplify_pass(e: Expr) -> Expr:
    if not e.children:
        return _simplify_node(e)
    children = tuple(_simplify_pass(c) for c in e.children)
    if any(a is not b for a, b in zip(children, e.children)):
        e = Expr(e.op, e.value, e.name, children)
    return _simplify_node(e)


def prune(e: Expr) -> Expr:
    """Simplify to a fixpoint; result evaluates identically for all bindings."""
    while True:
        nxt = _simplify_pass(e)
        if nxt == e:
            return nxt
        e = nxt


def _prune_rule_parts(rule: Rule, prune_fn) -> Rule:
    cond = prune_fn(rule.condition)
    if rule.then_action is None:
        return Rule(cond)
    then = prune_fn(rule.then_action)
    other = prune_fn(rule.else_action) if rule.else_action is not None else None
    if cond.op == CONST:
        if cond.value != 0.0:
            return Rule(then)
        if other is not None:
            return Rule(other)
        return Rule(const(0.0))
    if other is not None and then == other:
        return Rule(then)
    return Rule(cond, then, other)


def prune_rule(rule: Rule) -> Rule:
    """Prune every part; a constant condition eliminates the dead branch."""
    return _prune_rule_parts(rule, prune)


# ---------------------------------------------------------------------------
# Interval arithmetic
# ---------------------------------------------------------------------------


def _clamp_iv(lo: float, hi: float) -> Interval:
    return (max(lo, -VALUE_LIMIT), min(hi, VALUE_LIMIT))


def _iv_truth(iv: Interval) -> Optional[bool]:
    """Definite truthiness of a value known to lie in ``iv``, if decidable."""
    lo, hi = iv
    if lo == 0.0 and hi == 0.0:
        return False
    if lo > 0.0 or hi < 0.0:
        return True
    return None


def _interval_of(e: Expr, ranges: Mapping[str, Interval]) -> Interval:
    op = e.op
    if op == CONST:
        return (e.value, e.value)
    if op == VAR:
        try:
            lo, hi = ranges[e.name]
        except KeyError:
            raise ValueError(f"no range given for variable {e.name!r}") from None
        return (float(lo), float(hi))
    if op == "NEG":
        lo, hi = _interval_of(e.children[0], ranges)
        return (-hi, -lo)
    if op == "NOT":
        truth = _iv_truth(_interval_of(e.children[0], ranges))
        if truth is None:
            return (0.0, 1.0)
        return (0.0, 0.0) if truth else (1.0, 1.0)
    a = _interval_of(e.children[0], ranges)
    b = _interval_of(e.children[1], ranges)
    if op == "+":
        return _clamp_iv(a[0] + b[0], a[1] + b[1])
    if op == "-":
        return _clamp_iv(a[0] - b[1], a[1] - b[0])
    if op == "*":
        products = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
        return _clamp_iv(min(products), max(products))
    if op == "/":
        if b == (0.0, 0.0):
            return (1.0, 1.0)
        if b[0] <= 0.0 <= b[1]:
            # Divisor straddles zero: unbounded quotients plus the protected 1.
            return (-VALUE_LIMIT, VALUE_LIMIT)
        quotients = (a[0] / b[0], a[0] / b[1], a[1] / b[0], a[1] / b[1])
        return _clamp_iv(min(quotients), max(quotients))
    if op in CMP_OPS:
        decided = _decide_cmp(op, a, b)
        if decided is None:
            return (0.0, 1.0)
        return (1.0, 1.0) if decided else (0.0, 0.0)
    if op == "AND":
        ta, tb = _iv_truth(a), _iv_truth(b)
        if ta is False or tb is False:
            return (0.0, 0.0)
        if ta is True and tb is True:
            return (1.0, 1.0)
        return (0.0, 1.0)
    if op == "OR":
        ta, tb = _iv_truth(a), _iv_truth(b)
        if ta is True or tb is True:
            return (1.0, 1.0)
        if ta is False and tb is False:
            return (0.0, 0.0)
        return (0.0, 1.0)
    raise AssertionError(f"unhandled operator {op!r}")


def _decide_cmp(op: str, a: Interval, b: Interval) -> Optional[bool]:
    """Truth value of ``a op b`` when the intervals decide it, else None."""
    if op == ">":
        if a[0] > b[1]:
            return True
        if a[1] <= b[0]:
            return False
    elif op == ">=":
        if a[0] >= b[1]:
            return True
        if a[1] < b[0]:
            return False
    elif op == "<":
        if a[1] < b[0]:
            return True
        if a[0] >= b[1]:
            return False
    elif op == "<=":
        if a[1] <= b[0]:
            return True
        if a[0] > b[1]:
            return False
    elif op == "==":
        if a[0] == a[1] == b[0] == b[1]:
            return True
        if a[1] < b[0] or b[1] < a[0]:
            return False
    elif op == "!=":
        if a[0] == a[1] == b[0] == b[1]:
            return False
        if a[1] < b[0] or b[1] < a[0]:
            return True
    return None


def _interval_fold(e: Expr, ranges: Mapping[str, Interval]) -> Expr:
    if not e.children:
        return e
    children = tuple(_interval_fold(c, ranges) for c in e.children)
    if any(a is not b for a, b in zip(children, e.children)):
        e = Expr(e.op, e.value, e.name, children)
    lo, hi = _interval_of(e, ranges)
    if lo == hi and e.op != CONST:
        return const(lo)
    return e


def prune_with_ranges(e: Expr, ranges: Mapping[str, Interval]) -> Expr:
    """Prune using per-variable bounds; equivalent within those bounds.

    On top of the range-free rewrites, any comparison or boolean node whose
    operand intervals decide its outcome folds to that constant.
    """
    for name in variables_of(e):
        if name not in ranges:
            raise ValueError(f"no range given for variable {name!r}")
    while True:
        nxt = prune(_interval_fold(e, ranges))
        if nxt == e:
            return nxt
        e = nxt


def prune_rule_with_ranges(rule: Rule, ranges: Mapping[str, Interval]) -> Rule:
    return _prune_rule_parts(rule, lambda e: prune_with_ranges(e, ranges))


# ---------------------------------------------------------------------------
# Sampled equivalence (the pruner's test oracle)
# ---------------------------------------------------------------------------


def equivalent_sampled(
    a: Union[Expr, Rule],
    b: Union[Expr, Rule],
    ranges: Mapping[str, Interval],
    n: int,
    rng: random.Random,
    integer: bool = False,
    tol: float = 1e-9,
) -> bool:
    """True iff ``a`` and ``b`` evaluate alike on ``n`` sampled bindings.

    Bindings are drawn uniformly within ``ranges`` (integers when ``integer``
    is set, matching integer grammars where agreement must be exact; real
    grammars compare within ``tol``).
    """
    names: set[str] = set()
    for target in (a, b):
        if isinstance(target, Rule):
            names |= rule_variables(target)
        else:
            names |= variables_of(target)
    for name in names:
        if name not in ranges:
            raise ValueError(f"no range given for variable {name!r}")
    ordered = sorted(names)
    for _ in range(n):
        bindings = {}
        for name in ordered:
            lo, hi = ranges[name]
            if integer:
                bindings[name] = float(rng.randint(int(lo), int(hi)))
            else:
                bindings[name] = rng.uniform(lo, hi)
        va = eval_rule(a, bindings) if isinstance(a, Rule) else eval_expr(a, bindings)
        vb = eval_rule(b, bindings) if isinstance(b, Rule) else eval_expr(b, bindings)
        if integer:
            if va != vb:
                return False
        elif abs(va - vb) > tol * max(1.0, abs(va), abs(vb)):
            return False
    return True
