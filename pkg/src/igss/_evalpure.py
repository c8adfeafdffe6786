"""Pure-numpy postfix evaluator; the fallback for the compiled kernel.

Same opcode set and same arithmetic as ``_evalcore``: saturating add, sub,
mul and neg; division by zero yields 1; comparisons and logic produce 1.0/0.0.
"""

from __future__ import annotations

import numpy as np

VALUE_LIMIT = 1e300


def eval_program_into(code, args, consts, columns, out) -> None:
    stack: list = []
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for i in range(len(code)):
            op = int(code[i])
            arg = int(args[i])
            if op == 0:  # PUSH_CONST
                stack.append(consts[arg])
            elif op == 1:  # PUSH_VAR
                stack.append(columns[arg])
            elif op == 14:  # NOT
                stack[-1] = np.where(stack[-1] != 0.0, 0.0, 1.0)
            elif op == 15:  # NEG
                stack[-1] = np.clip(-stack[-1], -VALUE_LIMIT, VALUE_LIMIT)
            elif op == 16:  # SELECT
                e = stack.pop()
                t = stack.pop()
                c = stack.pop()
                stack.append(np.where(c != 0.0, t, e))
            else:
                b = stack.pop()
                a = stack.pop()
                if op == 2:
                    r = np.clip(a + b, -VALUE_LIMIT, VALUE_LIMIT)
                elif op == 3:
                    r = np.clip(a - b, -VALUE_LIMIT, VALUE_LIMIT)
                elif op == 4:
                    r = np.clip(a * b, -VALUE_LIMIT, VALUE_LIMIT)
                elif op == 5:
                    safe = np.where(b == 0.0, 1.0, b)
                    r = np.where(b == 0.0, 1.0,
                                 np.clip(a / safe, -VALUE_LIMIT, VALUE_LIMIT))
                elif op == 6:
                    r = np.where(a > b, 1.0, 0.0)
                elif op == 7:
                    r = np.where(a >= b, 1.0, 0.0)
                elif op == 8:
                    r = np.where(a < b, 1.0, 0.0)
                elif op == 9:
                    r = np.where(a <= b, 1.0, 0.0)
                elif op == 10:
                    r = np.where(a == b, 1.0, 0.0)
                elif op == 11:
                    r = np.where(a != b, 1.0, 0.0)
                elif op == 12:
                    r = np.where((a != 0.0) & (b != 0.0), 1.0, 0.0)
                elif op == 13:
                    r = np.where((a != 0.0) | (b != 0.0), 1.0, 0.0)
                else:
                    raise AssertionError(f"bad opcode {op}")
                stack.append(r)
    out[:] = stack[-1]
