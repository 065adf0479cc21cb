# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels: postfix expression interpreter, fused chain step and
per-sample map application.

Signatures mirror :mod:`cmslab._fallback`; every kernel returns
``(result..., bad_row, bad_op)`` where ``bad_row == -1`` means success.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, log, fabs, pow, isfinite

cnp.import_array()

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_NEG = 2
    OP_ADD = 3
    OP_SUB = 4
    OP_MUL = 5
    OP_DIV = 6
    OP_POW = 7
    OP_SIN = 8
    OP_COS = 9
    OP_EXP = 10
    OP_LOG = 11
    OP_ABS = 12
    OP_MIN = 13
    OP_MAX = 14
    OP_LT = 15
    OP_LE = 16
    OP_GT = 17
    OP_GE = 18
    OP_AND = 19
    OP_OR = 20

# error code above the opcode range
cdef enum:
    ERR_NEGATIVE_PROB = 100


cdef inline int run(const int[::1] ops, const int[::1] args, const double[::1] consts,
                    Py_ssize_t start, Py_ssize_t stop, const double* x,
                    double* stack, double* result) noexcept nogil:
    """Evaluate one program at one point; return -1 or the failing opcode."""
    cdef Py_ssize_t pc
    cdef int sp = 0
    cdef int op
    cdef double a, b, r
    for pc in range(start, stop):
        op = ops[pc]
        if op == OP_CONST:
            stack[sp] = consts[args[pc]]
            sp += 1
            continue
        if op == OP_VAR:
            stack[sp] = x[args[pc]]
            sp += 1
            continue
        if op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
            continue
        if op >= OP_SIN and op <= OP_ABS:
            a = stack[sp - 1]
            if op == OP_SIN:
                r = sin(a)
            elif op == OP_COS:
                r = cos(a)
            elif op == OP_EXP:
                r = exp(a)
            elif op == OP_LOG:
                if a <= 0.0:
                    return op
                r = log(a)
            else:
                r = fabs(a)
            if not isfinite(r):
                return op
            stack[sp - 1] = r
            continue
        sp -= 1
        b = stack[sp]
        a = stack[sp - 1]
        if op == OP_ADD:
            r = a + b
        elif op == OP_SUB:
            r = a - b
        elif op == OP_MUL:
            r = a * b
        elif op == OP_DIV:
            if b == 0.0:
                return op
            r = a / b
        elif op == OP_POW:
            r = pow(a, b)
        elif op == OP_MIN:
            r = a if a <= b else b
        elif op == OP_MAX:
            r = a if a >= b else b
        elif op == OP_LT:
            r = 1.0 if a < b else 0.0
        elif op == OP_LE:
            r = 1.0 if a <= b else 0.0
        elif op == OP_GT:
            r = 1.0 if a > b else 0.0
        elif op == OP_GE:
            r = 1.0 if a >= b else 0.0
        elif op == OP_AND:
            r = 1.0 if (a != 0.0 and b != 0.0) else 0.0
        else:
            r = 1.0 if (a != 0.0 or b != 0.0) else 0.0
        if not isfinite(r):
            return op
        stack[sp - 1] = r
    result[0] = stack[0]
    return -1


def eval_batch(pack, int prog, double[:, ::1] X):
    cdef const int[::1] ops = pack.ops
    cdef const int[::1] args = pack.args
    cdef const double[::1] consts = pack.consts
    cdef const long[::1] starts = pack.prog_start
    cdef Py_ssize_t n = X.shape[0], i
    cdef Py_ssize_t s = starts[prog], t = starts[prog + 1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    stack_arr = np.empty(pack.stack_size, dtype=np.float64)
    cdef double[::1] stack = stack_arr
    cdef int err
    with nogil:
        for i in range(n):
            err = run(ops, args, consts, s, t, &X[i, 0], &stack[0], &out[i])
            if err >= 0:
                with gil:
                    return out_arr, i, err
    return out_arr, -1, -1


def edge_prob_matrix(pack, double[:, ::1] X, const int[::1] V):
    cdef const int[::1] ops = pack.ops
    cdef const int[::1] args = pack.args
    cdef const double[::1] consts = pack.consts
    cdef const long[::1] starts = pack.prog_start
    cdef const int[::1] prob_prog = pack.prob_prog
    cdef const long[::1] out_start = pack.out_start
    cdef const int[::1] out_edge = pack.out_edge
    cdef Py_ssize_t n = X.shape[0], i, k, e
    cdef int p, err
    P_arr = np.zeros((n, pack.n_edges), dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    stack_arr = np.empty(pack.stack_size, dtype=np.float64)
    cdef double[::1] stack = stack_arr
    with nogil:
        for i in range(n):
            for k in range(out_start[V[i]], out_start[V[i] + 1]):
                e = out_edge[k]
                p = prob_prog[e]
                err = run(ops, args, consts, starts[p], starts[p + 1], &X[i, 0], &stack[0], &P[i, e])
                if err >= 0:
                    with gil:
                        return P_arr, i, err
    return P_arr, -1, -1


cdef inline int apply_map(const int[::1] ops, const int[::1] args, const double[::1] consts,
                          const long[::1] starts, const int[:, ::1] map_prog, Py_ssize_t e,
                          Py_ssize_t d, const double* x, double* y, double* stack) noexcept nogil:
    cdef Py_ssize_t j
    cdef int p, err
    for j in range(d):
        p = map_prog[e, j]
        err = run(ops, args, consts, starts[p], starts[p + 1], x, stack, &y[j])
        if err >= 0:
            return err
    return -1


def chain_step(pack, double[:, ::1] X, const int[::1] V, const double[::1] U):
    """One transition per row: pick e among out-edges of V[i] with cumulative
    probability > U[i] (first such edge), then move to w_e(X[i])."""
    cdef const int[::1] ops = pack.ops
    cdef const int[::1] args = pack.args
    cdef const double[::1] consts = pack.consts
    cdef const long[::1] starts = pack.prog_start
    cdef const int[::1] prob_prog = pack.prob_prog
    cdef const int[:, ::1] map_prog = pack.map_prog
    cdef const long[::1] out_start = pack.out_start
    cdef const int[::1] out_edge = pack.out_edge
    cdef const int[::1] target = pack.edge_target
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, k, e, chosen, last_pos
    cdef int p, err
    cdef double cum, pe
    Y_arr = np.empty((n, d), dtype=np.float64)
    W_arr = np.empty(n, dtype=np.int32)
    E_arr = np.empty(n, dtype=np.int32)
    cdef double[:, ::1] Y = Y_arr
    cdef int[::1] W = W_arr
    cdef int[::1] Eo = E_arr
    stack_arr = np.empty(pack.stack_size, dtype=np.float64)
    cdef double[::1] stack = stack_arr
    with nogil:
        for i in range(n):
            cum = 0.0
            chosen = -1
            last_pos = -1
            for k in range(out_start[V[i]], out_start[V[i] + 1]):
                e = out_edge[k]
                p = prob_prog[e]
                err = run(ops, args, consts, starts[p], starts[p + 1], &X[i, 0], &stack[0], &pe)
                if err >= 0:
                    with gil:
                        return Y_arr, W_arr, E_arr, i, err
                if pe < 0.0:
                    with gil:
                        return Y_arr, W_arr, E_arr, i, ERR_NEGATIVE_PROB
                if pe > 0.0:
                    last_pos = e
                cum = cum + pe
                if chosen < 0 and U[i] < cum:
                    chosen = e
            if chosen < 0:
                # rounding left U above the total mass: take the last positive edge
                chosen = last_pos
            if chosen < 0:
                with gil:
                    return Y_arr, W_arr, E_arr, i, ERR_NEGATIVE_PROB
            err = apply_map(ops, args, consts, starts, map_prog, chosen, d, &X[i, 0], &Y[i, 0], &stack[0])
            if err >= 0:
                with gil:
                    return Y_arr, W_arr, E_arr, i, err
            Eo[i] = <int>chosen
            W[i] = target[chosen]
    return Y_arr, W_arr, E_arr, -1, -1


def apply_edges(pack, double[:, ::1] X, const int[::1] edges):
    """Y[i] = w_{edges[i]}(X[i])."""
    cdef const int[::1] ops = pack.ops
    cdef const int[::1] args = pack.args
    cdef const double[::1] consts = pack.consts
    cdef const long[::1] starts = pack.prog_start
    cdef const int[:, ::1] map_prog = pack.map_prog
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i
    cdef int err
    Y_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] Y = Y_arr
    stack_arr = np.empty(pack.stack_size, dtype=np.float64)
    cdef double[::1] stack = stack_arr
    with nogil:
        for i in range(n):
            err = apply_map(ops, args, consts, starts, map_prog, edges[i], d, &X[i, 0], &Y[i, 0], &stack[0])
            if err >= 0:
                with gil:
                    return Y_arr, i, err
    return Y_arr, -1, -1


def compose_words(pack, double[:, ::1] X, const int[:, ::1] words, double guard):
    """Apply each row's word left to right: Y[i] = w_{words[i,L-1]} o ... o w_{words[i,0]} X[i].

    Returns ``(Y, diverged, bad_row, bad_op)``; a row is marked diverged (and
    left at its last finite value) once any coordinate exceeds *guard* in
    absolute value.
    """
    cdef const int[::1] ops = pack.ops
    cdef const int[::1] args = pack.args
    cdef const double[::1] consts = pack.consts
    cdef const long[::1] starts = pack.prog_start
    cdef const int[:, ::1] map_prog = pack.map_prog
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], L = words.shape[1], i, j, c
    cdef int err
    Y_arr = np.array(X, dtype=np.float64, copy=True)
    D_arr = np.zeros(n, dtype=np.bool_)
    cdef double[:, ::1] Y = Y_arr
    cdef cnp.npy_bool[::1] D = D_arr
    tmp_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] tmp = tmp_arr
    stack_arr = np.empty(pack.stack_size, dtype=np.float64)
    cdef double[::1] stack = stack_arr
    with nogil:
        for i in range(n):
            for j in range(L):
                err = apply_map(ops, args, consts, starts, map_prog, words[i, j], d,
                                &Y[i, 0], &tmp[0], &stack[0])
                if err >= 0:
                    with gil:
                        return Y_arr, D_arr, i, err
                for c in range(d):
                    Y[i, c] = tmp[c]
                for c in range(d):
                    if fabs(Y[i, c]) > guard:
                        D[i] = 1
                if D[i]:
                    break
    return Y_arr, D_arr, -1, -1
