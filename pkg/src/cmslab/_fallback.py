"""Pure numpy implementations of the batch kernels.

Same signatures and semantics as the compiled ``_core`` module. Programs are
interpreted once per batch with numpy arrays on the stack, so the per-op cost
is amortized over all rows.
"""
import numpy as np

from .expr import OPCODES

ERR_NEGATIVE_PROB = 100

_UNARY = {
    OPCODES["sin"]: np.sin, OPCODES["cos"]: np.cos, OPCODES["exp"]: np.exp,
    OPCODES["log"]: np.log, OPCODES["abs"]: np.abs,
}
_BINARY = {
    OPCODES["+"]: np.add, OPCODES["-"]: np.subtract, OPCODES["*"]: np.multiply,
    OPCODES["/"]: np.divide, OPCODES["^"]: np.power,
    OPCODES["min"]: np.minimum, OPCODES["max"]: np.maximum,
}
_COMPARE = {
    OPCODES["<"]: np.less, OPCODES["<="]: np.less_equal,
    OPCODES[">"]: np.greater, OPCODES[">="]: np.greater_equal,
}


def _run(pack, prog, X):
    """Evaluate program *prog* on every row of X. Returns (values, bad_row, bad_op)."""
    n = X.shape[0]
    s, t = pack.prog_start[prog], pack.prog_start[prog + 1]
    stack = []
    bad = np.zeros(n, dtype=bool)
    first_op = np.full(n, -1, dtype=np.int64)

    def flag(mask, op):
        new = mask & ~bad
        first_op[new] = op
        bad[new] = True

    with np.errstate(all="ignore"):
        for pc in range(s, t):
            op = int(pack.ops[pc])
            if op == 0:
                stack.append(np.full(n, pack.consts[pack.args[pc]]))
            elif op == 1:
                stack.append(X[:, pack.args[pc]].copy())
            elif op == 2:
                stack[-1] = -stack[-1]
            elif op in _UNARY:
                a = stack[-1]
                if op == OPCODES["log"]:
                    flag(a <= 0, op)
                r = _UNARY[op](a)
                flag(~np.isfinite(r), op)
                stack[-1] = r
            else:
                b = stack.pop()
                a = stack[-1]
                if op in _BINARY:
                    if op == OPCODES["/"]:
                        flag(b == 0, op)
                    r = _BINARY[op](a, b)
                elif op in _COMPARE:
                    r = _COMPARE[op](a, b).astype(np.float64)
                elif op == OPCODES["and"]:
                    r = ((a != 0) & (b != 0)).astype(np.float64)
                else:
                    r = ((a != 0) | (b != 0)).astype(np.float64)
                flag(~np.isfinite(r), op)
                stack[-1] = r
    out = stack[0] if n else np.empty(0)
    if bad.any():
        i = int(np.argmax(bad))
        return out, i, int(first_op[i])
    return out, -1, -1


def eval_batch(pack, prog, X):
    return _run(pack, prog, X)


def edge_prob_matrix(pack, X, V):
    n = X.shape[0]
    P = np.zeros((n, pack.n_edges))
    worst = None
    for v in range(pack.n_vertices):
        rows = np.flatnonzero(V == v)
        if rows.size == 0:
            continue
        for e in pack.out_edge[pack.out_start[v]:pack.out_start[v + 1]]:
            vals, bad, op = _run(pack, pack.prob_prog[e], X[rows])
            if bad >= 0 and (worst is None or rows[bad] < worst[0]):
                worst = (int(rows[bad]), op)
            P[rows, e] = vals
    if worst is not None:
        return P, worst[0], worst[1]
    return P, -1, -1


def _apply(pack, X, edges):
    """w_{edges[i]}(X[i]) for every row; returns (Y, bad_row, bad_op)."""
    n, d = X.shape
    Y = np.empty((n, d))
    worst = None
    for e in np.unique(edges):
        rows = np.flatnonzero(edges == e)
        sub = X[rows]
        for j in range(d):
            vals, bad, op = _run(pack, pack.map_prog[e, j], sub)
            if bad >= 0 and (worst is None or rows[bad] < worst[0]):
                worst = (int(rows[bad]), op)
            Y[rows, j] = vals
    if worst is not None:
        return Y, worst[0], worst[1]
    return Y, -1, -1


def chain_step(pack, X, V, U):
    n, d = X.shape
    P, bad, op = edge_prob_matrix(pack, X, V)
    if bad >= 0:
        return np.empty((n, d)), np.empty(n, np.int32), np.empty(n, np.int32), bad, op
    chosen = np.full(n, -1, dtype=np.int64)
    for v in range(pack.n_vertices):
        rows = np.flatnonzero(V == v)
        if rows.size == 0:
            continue
        out = pack.out_edge[pack.out_start[v]:pack.out_start[v + 1]]
        Pv = P[np.ix_(rows, out)]
        neg = (Pv < 0).any(axis=1)
        if neg.any():
            return (np.empty((n, d)), np.empty(n, np.int32), np.empty(n, np.int32),
                    int(rows[np.argmax(neg)]), ERR_NEGATIVE_PROB)
        cum = np.cumsum(Pv, axis=1)
        hit = U[rows, None] < cum
        has = hit.any(axis=1)
        k = np.argmax(hit, axis=1)
        # no hit: last edge with positive probability
        pos = Pv > 0
        last = pos.shape[1] - 1 - np.argmax(pos[:, ::-1], axis=1)
        k = np.where(has, k, last)
        empty = ~has & ~pos.any(axis=1)
        if empty.any():
            return (np.empty((n, d)), np.empty(n, np.int32), np.empty(n, np.int32),
                    int(rows[np.argmax(empty)]), ERR_NEGATIVE_PROB)
        chosen[rows] = out[k]
    Y, bad, op = _apply(pack, X, chosen)
    return (Y, pack.edge_target[chosen].astype(np.int32), chosen.astype(np.int32), bad, op)


def apply_edges(pack, X, edges):
    return _apply(pack, X, np.asarray(edges))


def compose_words(pack, X, words, guard):
    Y = np.array(X, dtype=np.float64, copy=True)
    n = Y.shape[0]
    diverged = np.zeros(n, dtype=bool)
    for j in range(words.shape[1]):
        live = np.flatnonzero(~diverged)
        if live.size == 0:
            break
        Z, bad, op = _apply(pack, Y[live], words[live, j])
        if bad >= 0:
            return Y, diverged, int(live[bad]), op
        Y[live] = Z
        diverged[live] = (np.abs(Z) > guard).any(axis=1)
    return Y, diverged, -1, -1
