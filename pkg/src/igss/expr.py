"""Expression trees: the genome of evolution and the rule artifact.

An :class:`Expr` is an immutable tree of numeric constants, named variables
and arithmetic/comparison/boolean operators.  A :class:`Rule` wraps either a
bare condition (a classifier, whose value is the condition itself) or an
``IF condition THEN action ELSE action`` decision.

Evaluation is numeric throughout.  Booleans coerce to 1/0 and any nonzero
number counts as true, so evolved rules may freely mix arithmetic and logic
(e.g. ``agents AND previousTook``).  Division by zero yields 1 and every
arithmetic result saturates at ``VALUE_LIMIT``, which keeps evaluation total
(no infinities or NaNs) and makes algebraic identities such as ``x - x = 0``
hold for every tree.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional

# Saturation bound for arithmetic; well below the float64 overflow threshold
# so that sums of saturated values stay finite.
VALUE_LIMIT = 1e300

CONST = "const"
VAR = "var"

UNARY_OPS = ("NOT", "NEG")
ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = (">", ">=", "<", "<=", "==", "!=")
BOOL_OPS = ("AND", "OR")
BINARY_OPS = ARITH_OPS + CMP_OPS + BOOL_OPS
ALL_OPS = BINARY_OPS + UNARY_OPS

ARITY = {op: 2 for op in BINARY_OPS}
ARITY.update({op: 1 for op in UNARY_OPS})
ARITY[CONST] = 0
ARITY[VAR] = 0


class EvalError(Exception):
    """Raised when an expression cannot be evaluated (unbound variable)."""


class ParseError(Exception):
    """Raised on malformed rule text; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class Expr:
    """One node of an expression tree.

    ``op`` is ``"const"``, ``"var"`` or an operator token; arity must match
    ``op`` exactly.  Instances are immutable and safe to share across threads.
    """

    op: str
    value: float = 0.0
    name: str = ""
    children: tuple["Expr", ...] = ()

    def __post_init__(self):
        if self.op not in ARITY:
            raise ValueError(f"unknown node kind {self.op!r}")
        if len(self.children) != ARITY[self.op]:
            raise ValueError(
                f"{self.op!r} expects {ARITY[self.op]} children, "
                f"got {len(self.children)}"
            )

    def is_const(self) -> bool:
        return self.op == CONST

    def is_var(self) -> bool:
        return self.op == VAR


def const(value: float) -> Expr:
    return Expr(CONST, value=float(value))


def var(name: str) -> Expr:
    return Expr(VAR, name=name)


def unary(op: str, child: Expr) -> Expr:
    return Expr(op, children=(child,))


def binary(op: str, left: Expr, right: Expr) -> Expr:
    return Expr(op, children=(left, right))


TRUE = const(1.0)
FALSE = const(0.0)


@dataclass(frozen=True)
class Rule:
    """A behaviour rule: bare condition, or IF/THEN or IF/THEN/ELSE.

    A classifier rule has no actions and its value is the condition's value
    (consumers apply boolean coercion).  A decision rule evaluates to the
    selected action's value; a missing ELSE acts as 0.
    """

    condition: Expr
    then_action: Optional[Expr] = None
    else_action: Optional[Expr] = None

    def __post_init__(self):
        if self.else_action is not None and self.then_action is None:
            raise ValueError("rule has an ELSE action without a THEN action")

    def parts(self) -> tuple[Expr, ...]:
        out = [self.condition]
        if self.then_action is not None:
            out.append(self.then_action)
        if self.else_action is not None:
            out.append(self.else_action)
        return tuple(out)

    def replace_part(self, index: int, expr: Expr) -> "Rule":
        parts = list(self.parts())
        parts[index] = expr
        cond = parts[0]
        then = parts[1] if len(parts) > 1 else None
        other = parts[2] if len(parts) > 2 else None
        return Rule(cond, then, other)


@dataclass(frozen=True)
class Grammar:
    """The primitive set available to random generation and mutation.

    ``variables`` maps each terminal name to its (min, max) value range; the
    ranges drive range-aware pruning and sampled-equivalence checks.  The
    constant pool may hold an integer range, a real range, or both.
    """

    variables: Mapping[str, tuple[float, float]]
    operators: tuple[str, ...] = ALL_OPS
    int_constants: Optional[tuple[int, int]] = None
    real_constants: Optional[tuple[float, float]] = None
    max_depth: int = 8

    def __post_init__(self):
        if not self.variables:
            raise ValueError("grammar needs at least one variable")
        if not self.operators:
            raise ValueError("grammar needs at least one operator")
        for op in self.operators:
            if op not in ALL_OPS:
                raise ValueError(f"unknown operator {op!r}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(self.variables)

    def has_constants(self) -> bool:
        return self.int_constants is not None or self.real_constants is not None

    def ranges(self) -> dict[str, tuple[float, float]]:
        return dict(self.variables)


# ---------------------------------------------------------------------------
# Evaluation (scalar tree walk; the reference semantics for all backends)
# ---------------------------------------------------------------------------


def _clamp(x: float) -> float:
    if x > VALUE_LIMIT:
        return VALUE_LIMIT
    if x < -VALUE_LIMIT:
        return -VALUE_LIMIT
    return x


def eval_expr(expr: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``expr`` against variable bindings.

    Pure and deterministic.  Raises :class:`EvalError` naming any variable
    missing from ``bindings``.
    """
    op = expr.op
    if op == CONST:
        return expr.value
    if op == VAR:
        try:
            return float(bindings[expr.name])
        except KeyError:
            raise EvalError(f"unbound variable {expr.name!r}") from None
    if op == "NOT":
        return 0.0 if eval_expr(expr.children[0], bindings) != 0.0 else 1.0
    if op == "NEG":
        return _clamp(-eval_expr(expr.children[0], bindings))
    a = eval_expr(expr.children[0], bindings)
    b = eval_expr(expr.children[1], bindings)
    if op == "+":
        return _clamp(a + b)
    if op == "-":
        return _clamp(a - b)
    if op == "*":
        return _clamp(a * b)
    if op == "/":
        return 1.0 if b == 0.0 else _clamp(a / b)
    if op == ">":
        return 1.0 if a > b else 0.0
    if op == ">=":
        return 1.0 if a >= b else 0.0
    if op == "<":
        return 1.0 if a < b else 0.0
    if op == "<=":
        return 1.0 if a <= b else 0.0
    if op == "==":
        return 1.0 if a == b else 0.0
    if op == "!=":
        return 1.0 if a != b else 0.0
    if op == "AND":
        return 1.0 if (a != 0.0 and b != 0.0) else 0.0
    if op == "OR":
        return 1.0 if (a != 0.0 or b != 0.0) else 0.0
    raise AssertionError(f"unhandled operator {op!r}")


def eval_rule(rule: Rule, bindings: Mapping[str, float]) -> float:
    cond = eval_expr(rule.condition, bindings)
    if rule.then_action is None:
        return cond
    if cond != 0.0:
        return eval_expr(rule.then_action, bindings)
    if rule.else_action is None:
        return 0.0
    return eval_expr(rule.else_action, bindings)


# ---------------------------------------------------------------------------
# Tree utilities
# ---------------------------------------------------------------------------


def size(expr: Expr) -> int:
    return 1 + sum(size(c) for c in expr.children)


def depth(expr: Expr) -> int:
    if not expr.children:
        return 1
    return 1 + max(depth(c) for c in expr.children)


def rule_size(rule: Rule) -> int:
    return sum(size(p) for p in rule.parts())


def rule_depth(rule: Rule) -> int:
    return max(depth(p) for p in rule.parts())


def iter_nodes(expr: Expr) -> Iterator[Expr]:
    """Pre-order traversal."""
    yield expr
    for child in expr.children:
        yield from iter_nodes(child)


def node_at(expr: Expr, index: int) -> Expr:
    """Return the node at pre-order position ``index``."""
    for i, node in enumerate(iter_nodes(expr)):
        if i == index:
            return node
    raise IndexError(index)


def node_depth_at(expr: Expr, index: int) -> int:
    """Depth (root = 1) of the node at pre-order position ``index``."""

    def depths(node: Expr, d: int) -> Iterator[int]:
        yield d
        for child in node.children:
            yield from depths(child, d + 1)

    for i, d in enumerate(depths(expr, 1)):
        if i == index:
            return d
    raise IndexError(index)


def replace_at(expr: Expr, index: int, replacement: Expr) -> Expr:
    """Return a copy of ``expr`` with the node at pre-order ``index`` swapped."""

    def walk(node: Expr) -> Expr:
        nonlocal counter
        here = counter
        counter += 1
        if here == index:
            # Skip the replaced subtree's positions.
            counter += size(node) - 1
            return replacement
        if not node.children:
            return node
        new_children = tuple(walk(c) for c in node.children)
        if all(a is b for a, b in zip(new_children, node.children)):
            return node
        return Expr(node.op, node.value, node.name, new_children)

    counter = 0
    out = walk(expr)
    if counter <= index:
        raise IndexError(index)
    return out


def variables_of(expr: Expr) -> set[str]:
    return {n.name for n in iter_nodes(expr) if n.is_var()}


def rule_variables(rule: Rule) -> set[str]:
    out: set[str] = set()
    for part in rule.parts():
        out |= variables_of(part)
    return out


# ---------------------------------------------------------------------------
# Random generation (ramped half-and-half)
# ---------------------------------------------------------------------------


def _random_terminal(grammar: Grammar, rng: random.Random) -> Expr:
    kinds = list(grammar.var_names)
    if grammar.int_constants is not None:
        kinds.append("#int")
    if grammar.real_constants is not None:
        kinds.append("#real")
    pick = kinds[rng.randrange(len(kinds))]
    if pick == "#int":
        lo, hi = grammar.int_constants
        return const(float(rng.randint(lo, hi)))
    if pick == "#real":
        lo, hi = grammar.real_constants
        return const(round(rng.uniform(lo, hi), 3))
    return var(pick)


def _grow(grammar: Grammar, rng: random.Random, budget: int) -> Expr:
    if budget <= 1:
        return _random_terminal(grammar, rng)
    n_terminal_kinds = len(grammar.var_names)
    if grammar.int_constants is not None:
        n_terminal_kinds += 1
    if grammar.real_constants is not None:
        n_terminal_kinds += 1
    total = n_terminal_kinds + len(grammar.operators)
    if rng.randrange(total) < n_terminal_kinds:
        return _random_terminal(grammar, rng)
    op = grammar.operators[rng.randrange(len(grammar.operators))]
    kids = tuple(_grow(grammar, rng, budget - 1) for _ in range(ARITY[op]))
    return Expr(op, children=kids)


def _full(grammar: Grammar, rng: random.Random, budget: int) -> Expr:
    if budget <= 1:
        return _random_terminal(grammar, rng)
    op = grammar.operators[rng.randrange(len(grammar.operators))]
    kids = tuple(_full(grammar, rng, budget - 1) for _ in range(ARITY[op]))
    return Expr(op, children=kids)


def random_expr(
    grammar: Grammar,
    rng: random.Random,
    target_depth: Optional[int] = None,
    method: Optional[str] = None,
) -> Expr:
    """Draw a random expression via ramped half-and-half.

    Without explicit arguments, the target depth ramps uniformly over
    2..max_depth and the grow/full method is a coin flip, which yields good
    size diversity (single-node trees through full max-depth trees).
    """
    if target_depth is None:
        lo = min(2, grammar.max_depth)
        target_depth = rng.randint(lo, grammar.max_depth)
    if method is None:
        method = "full" if rng.random() < 0.5 else "grow"
    if method == "full":
        return _full(grammar, rng, target_depth)
    return _grow(grammar, rng, target_depth)


def random_rule(grammar: Grammar, rng: random.Random, classifier: bool) -> Rule:
    """Draw a random rule genome.

    Classifier genomes are a bare condition; decision genomes are full
    IF/THEN/ELSE triples whose action trees are kept shallow (the published
    rule shape has simple "take x" actions).
    """
    cond = random_expr(grammar, rng)
    if classifier:
        return Rule(cond)
    action_depth = min(3, grammar.max_depth)
    then = random_expr(grammar, rng, target_depth=rng.randint(1, action_depth))
    other = random_expr(grammar, rng, target_depth=rng.randint(1, action_depth))
    return Rule(cond, then, other)


# ---------------------------------------------------------------------------
# Rendering and parsing
# ---------------------------------------------------------------------------

_PRECEDENCE = {
    "OR": 1,
    "AND": 2,
    ">": 4, ">=": 4, "<": 4, "<=": 4, "==": 4, "!=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
}
_NOT_PREC = 3
_NEG_PREC = 7


def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _render(expr: Expr, parent_prec: int, right_side: bool) -> str:
    op = expr.op
    if op == CONST:
        text = _format_number(expr.value)
        if expr.value < 0 and parent_prec > 0:
            return f"({text})"
        return text
    if op == VAR:
        return expr.name
    if op == "NOT":
        inner = _render(expr.children[0], _NOT_PREC, False)
        text = f"NOT {inner}"
        return f"({text})" if parent_prec > _NOT_PREC else text
    if op == "NEG":
        child = expr.children[0]
        if child.is_const():
            # Keep NEG-of-constant distinct from a negative literal.
            inner = f"({_format_number(child.value)})"
        else:
            inner = _render(child, _NEG_PREC, False)
        text = f"-{inner}"
        return f"({text})" if parent_prec > _NEG_PREC else text
    prec = _PRECEDENCE[op]
    left = _render(expr.children[0], prec, False)
    right = _render(expr.children[1], prec + 1, True)
    text = f"{left} {op} {right}"
    if parent_prec > prec or (right_side and parent_prec == prec):
        return f"({text})"
    return text


def render(expr: Expr) -> str:
    """Render an expression as infix text with minimal parentheses."""
    return _render(expr, 0, False)


def render_rule(rule: Rule) -> str:
    if rule.then_action is None:
        return render(rule.condition)
    text = f"IF {render(rule.condition)} THEN {render(rule.then_action)}"
    if rule.else_action is not None:
        text += f" ELSE {render(rule.else_action)}"
    return text


_KEYWORDS = {"IF", "THEN", "ELSE", "AND", "OR", "NOT"}
_MULTI_CHAR = (">=", "<=", "==", "!=")
_SINGLE_CHAR = "+-*/><()"


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Return (kind, value, position) tokens.

    Kinds: ``num``, ``ident``, ``kw``, ``op``, ``lparen``, ``rparen``.
    """
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if text[i:i + 2] in _MULTI_CHAR:
            tokens.append(("op", text[i:i + 2], i))
            i += 2
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                float(text[i:j])
            except ValueError:
                raise ParseError(f"bad number {text[i:j]!r}", i)
            tokens.append(("num", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word.upper() in _KEYWORDS:
                tokens.append(("kw", word.upper(), i))
            else:
                tokens.append(("ident", word, i))
            i = j
            continue
        if ch == "(":
            tokens.append(("lparen", ch, i))
            i += 1
            continue
        if ch == ")":
            tokens.append(("rparen", ch, i))
            i += 1
            continue
        if ch in _SINGLE_CHAR:
            tokens.append(("op", ch, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    return tokens


class _Parser:
    def __init__(self, text: str, known_vars: Optional[set[str]] = None):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.known_vars = known_vars

    def peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return ("eof", "", len(self.text))

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect_kw(self, word: str):
        kind, value, position = self.take()
        if kind != "kw" or value != word:
            raise ParseError(f"expected {word}, found {value or 'end of input'}",
                             position)

    def fail(self, message: str):
        _, value, position = self.peek()
        raise ParseError(f"{message} (found {value or 'end of input'!r})", position)

    # Precedence-climbing over: OR < AND < NOT < comparison < additive
    # < multiplicative < unary minus < atom.

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        node = self.parse_and()
        while self.peek()[:2] == ("kw", "OR"):
            self.take()
            node = binary("OR", node, self.parse_and())
        return node

    def parse_and(self) -> Expr:
        node = self.parse_not()
        while self.peek()[:2] == ("kw", "AND"):
            self.take()
            node = binary("AND", node, self.parse_not())
        return node

    def parse_not(self) -> Expr:
        if self.peek()[:2] == ("kw", "NOT"):
            self.take()
            return unary("NOT", self.parse_not())
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        node = self.parse_additive()
        while self.peek()[0] == "op" and self.peek()[1] in CMP_OPS:
            op = self.take()[1]
            node = binary(op, node, self.parse_additive())
        return node

    def parse_additive(self) -> Expr:
        node = self.parse_multiplicative()
        while self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = binary(op, node, self.parse_multiplicative())
        return node

    def parse_multiplicative(self) -> Expr:
        node = self.parse_unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = binary(op, node, self.parse_unary())
        return node

    def parse_unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            # A minus directly on a literal is a negative constant; anything
            # else is a NEG node.
            if self.peek()[0] == "num":
                return const(-float(self.take()[1]))
            return unary("NEG", self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        kind, value, position = self.take()
        if kind == "num":
            return const(float(value))
        if kind == "ident":
            if self.known_vars is not None and value not in self.known_vars:
                raise ParseError(f"unknown identifier {value!r}", position)
            return var(value)
        if kind == "lparen":
            node = self.parse_expr()
            kind, value, position = self.take()
            if kind != "rparen":
                raise ParseError("expected ')'", position)
            return node
        raise ParseError(f"expected an expression, found {value or 'end of input'!r}",
                         position)


def parse(text: str, known_vars: Optional[set[str]] = None) -> Expr:
    """Parse infix expression text.  Inverse of :func:`render`."""
    parser = _Parser(text, known_vars)
    node = parser.parse_expr()
    if parser.peek()[0] != "eof":
        parser.fail("unexpected trailing input")
    return node


def parse_rule(text: str, known_vars: Optional[set[str]] = None) -> Rule:
    """Parse rule text: either a bare condition or IF/THEN[/ELSE]."""
    parser = _Parser(text, known_vars)
    if parser.peek()[:2] == ("kw", "IF"):
        parser.take()
        cond = parser.parse_expr()
        parser.expect_kw("THEN")
        then = parser.parse_expr()
        other = None
        if parser.peek()[:2] == ("kw", "ELSE"):
            parser.take()
            other = parser.parse_expr()
        rule = Rule(cond, then, other)
    else:
        rule = Rule(parser.parse_expr())
    if parser.peek()[0] != "eof":
        parser.fail("unexpected trailing input")
    return rule


def load_rule_lines(text: str, known_vars: Optional[set[str]] = None) -> list[Rule]:
    """Parse a rule file body: one rule per line, ``#`` starts a comment."""
    rules = []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            rules.append(parse_rule(body, known_vars))
    return rules


def dump_rule_lines(rules: list[Rule]) -> str:
    return "".join(render_rule(r) + "\n" for r in rules)
