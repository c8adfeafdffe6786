# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled postfix evaluator for batch rule evaluation.

Opcode numbering and arithmetic must stay in lockstep with ``_evalpure``;
the test suite cross-checks both backends bit for bit.
"""

cdef double VALUE_LIMIT = 1e300


cdef inline double clamp(double x) nogil:
    if x > VALUE_LIMIT:
        return VALUE_LIMIT
    if x < -VALUE_LIMIT:
        return -VALUE_LIMIT
    return x


cpdef void eval_program_into(const int[::1] code, const int[::1] args,
                             const double[::1] consts,
                             const double[:, ::1] columns,
                             double[::1] out,
                             double[:, ::1] stack) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t n_ops = code.shape[0]
    cdef Py_ssize_t sp = 0
    cdef Py_ssize_t i, j
    cdef int op, arg
    cdef double x, y

    for i in range(n_ops):
        op = code[i]
        arg = args[i]
        if op == 0:  # PUSH_CONST
            x = consts[arg]
            for j in range(n):
                stack[sp, j] = x
            sp += 1
        elif op == 1:  # PUSH_VAR
            for j in range(n):
                stack[sp, j] = columns[arg, j]
            sp += 1
        elif op == 2:  # ADD
            for j in range(n):
                stack[sp - 2, j] = clamp(stack[sp - 2, j] + stack[sp - 1, j])
            sp -= 1
        elif op == 3:  # SUB
            for j in range(n):
                stack[sp - 2, j] = clamp(stack[sp - 2, j] - stack[sp - 1, j])
            sp -= 1
        elif op == 4:  # MUL
            for j in range(n):
                stack[sp - 2, j] = clamp(stack[sp - 2, j] * stack[sp - 1, j])
            sp -= 1
        elif op == 5:  # DIV (protected: x / 0 = 1)
            for j in range(n):
                y = stack[sp - 1, j]
                if y == 0.0:
                    stack[sp - 2, j] = 1.0
                else:
                    stack[sp - 2, j] = clamp(stack[sp - 2, j] / y)
            sp -= 1
        elif op == 6:  # GT
            for j in range(n):
                stack[sp - 2, j] = 1.0 if stack[sp - 2, j] > stack[sp - 1, j] else 0.0
            sp -= 1
        elif op == 7:  # GE
            for j in range(n):
                stack[sp - 2, j] = 1.0 if stack[sp - 2, j] >= stack[sp - 1, j] else 0.0
            sp -= 1
        elif op == 8:  # LT
            for j in range(n):
                stack[sp - 2, j] = 1.0 if stack[sp - 2, j] < stack[sp - 1, j] else 0.0
            sp -= 1
        elif op == 9:  # LE
            for j in range(n):
                stack[sp - 2, j] = 1.0 if stack[sp - 2, j] <= stack[sp - 1, j] else 0.0
            sp -= 1
        elif op == 10:  # EQ
            for j in range(n):
                stack[sp - 2, j] = 1.0 if stack[sp - 2, j] == stack[sp - 1, j] else 0.0
            sp -= 1
        elif op == 11:  # NE
            for j in range(n):
                stack[sp - 2, j] = 1.0 if stack[sp - 2, j] != stack[sp - 1, j] else 0.0
            sp -= 1
        elif op == 12:  # AND
            for j in range(n):
                stack[sp - 2, j] = (1.0 if (stack[sp - 2, j] != 0.0
                                            and stack[sp - 1, j] != 0.0) else 0.0)
            sp -= 1
        elif op == 13:  # OR
            for j in range(n):
                stack[sp - 2, j] = (1.0 if (stack[sp - 2, j] != 0.0
                                            or stack[sp - 1, j] != 0.0) else 0.0)
            sp -= 1
        elif op == 14:  # NOT
            for j in range(n):
                stack[sp - 1, j] = 0.0 if stack[sp - 1, j] != 0.0 else 1.0
        elif op == 15:  # NEG
            for j in range(n):
                stack[sp - 1, j] = clamp(-stack[sp - 1, j])
        elif op == 16:  # SELECT (cond ? then : else)
            for j in range(n):
                if stack[sp - 3, j] != 0.0:
                    stack[sp - 3, j] = stack[sp - 2, j]
                else:
                    stack[sp - 3, j] = stack[sp - 1, j]
            sp -= 2

    for j in range(n):
        out[j] = stack[0, j]
