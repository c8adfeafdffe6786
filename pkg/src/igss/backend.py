"""Batch rule evaluation over column-oriented data.

Rules are compiled once into a small postfix program and then evaluated over
whole batches of bindings (dataset rows, or all agents in a simulation tick).
This loop dominates the runtime of every fitness function, so two
implementations exist:

* ``igss._evalcore`` — a compiled kernel (Cython) working on preallocated
  stack buffers, built at install time;
* ``igss._evalpure`` — a numpy fallback with identical arithmetic.

The import-time default picks the compiled kernel when present.  Set
``IGSS_BACKEND=pure`` or ``IGSS_BACKEND=compiled`` to force one.  Both
backends implement exactly the semantics of :func:`igss.expr.eval_expr`
(same saturation, same protected division), so results are bit-identical
regardless of the backend in use.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .expr import CONST, VAR, EvalError, Expr, Rule

OP_PUSH_CONST = 0
OP_PUSH_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_GT = 6
OP_GE = 7
OP_LT = 8
OP_LE = 9
OP_EQ = 10
OP_NE = 11
OP_AND = 12
OP_OR = 13
OP_NOT = 14
OP_NEG = 15
OP_SELECT = 16

_BINARY_OPCODES = {
    "+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV,
    ">": OP_GT, ">=": OP_GE, "<": OP_LT, "<=": OP_LE,
    "==": OP_EQ, "!=": OP_NE, "AND": OP_AND, "OR": OP_OR,
}
_UNARY_OPCODES = {"NOT": OP_NOT, "NEG": OP_NEG}


@dataclass(frozen=True)
class Program:
    """A compiled rule: postfix opcode/argument arrays plus constant pool."""

    code: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    max_stack: int
    var_names: tuple[str, ...]


def _emit(expr: Expr, var_index: dict[str, int], code: list, args: list,
          consts: list) -> None:
    if expr.op == CONST:
        code.append(OP_PUSH_CONST)
        args.append(len(consts))
        consts.append(expr.value)
        return
    if expr.op == VAR:
        try:
            col = var_index[expr.name]
        except KeyError:
            raise EvalError(f"unbound variable {expr.name!r}") from None
        code.append(OP_PUSH_VAR)
        args.append(col)
        return
    for child in expr.children:
        _emit(child, var_index, code, args, consts)
    if expr.op in _UNARY_OPCODES:
        code.append(_UNARY_OPCODES[expr.op])
    else:
        code.append(_BINARY_OPCODES[expr.op])
    args.append(0)


def compile_program(target: Union[Expr, Rule], var_names: Sequence[str]) -> Program:
    """Compile an expression or rule against an ordered column layout.

    Variable references resolve to positions in ``var_names``; evaluation then
    takes a matrix with one row per name in the same order.
    """
    var_index = {name: i for i, name in enumerate(var_names)}
    code: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    if isinstance(target, Rule):
        _emit(target.condition, var_index, code, args, consts)
        if target.then_action is not None:
            _emit(target.then_action, var_index, code, args, consts)
            if target.else_action is not None:
                _emit(target.else_action, var_index, code, args, consts)
            else:
                code.append(OP_PUSH_CONST)
                args.append(len(consts))
                consts.append(0.0)
            code.append(OP_SELECT)
            args.append(0)
    else:
        _emit(target, var_index, code, args, consts)

    depth = 0
    max_depth = 0
    for op in code:
        if op in (OP_PUSH_CONST, OP_PUSH_VAR):
            depth += 1
        elif op in (OP_NOT, OP_NEG):
            pass
        elif op == OP_SELECT:
            depth -= 2
        else:
            depth -= 1
        max_depth = max(max_depth, depth)

    return Program(
        code=np.asarray(code, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        max_stack=max_depth,
        var_names=tuple(var_names),
    )


from . import _evalpure

_compiled = None
if os.environ.get("IGSS_BACKEND", "auto") != "pure":
    try:
        from . import _evalcore as _compiled
    except ImportError:
        _compiled = None
if os.environ.get("IGSS_BACKEND") == "compiled" and _compiled is None:
    raise ImportError("IGSS_BACKEND=compiled but the igss._evalcore extension "
                      "is not built")

BACKEND_NAME = "compiled" if _compiled is not None else "pure"


def eval_batch(program: Program, columns: np.ndarray,
               out: Optional[np.ndarray] = None,
               backend: Optional[str] = None) -> np.ndarray:
    """Evaluate a compiled program over ``columns`` (n_vars x n_rows).

    Returns a float64 vector of n_rows results.  ``backend`` overrides the
    module default ("pure" or "compiled"); both give identical bits.
    """
    columns = np.ascontiguousarray(columns, dtype=np.float64)
    n = columns.shape[1] if columns.ndim == 2 else 0
    if out is None:
        out = np.empty(n, dtype=np.float64)
    use_compiled = _compiled is not None if backend is None else backend == "compiled"
    if use_compiled and _compiled is None:
        raise ValueError("compiled backend requested but not available")
    if use_compiled:
        stack = np.empty((max(1, program.max_stack), n), dtype=np.float64)
        _compiled.eval_program_into(program.code, program.args, program.consts,
                                    columns, out, stack)
    else:
        _evalpure.eval_program_into(program.code, program.args, program.consts,
                                    columns, out)
    return out
