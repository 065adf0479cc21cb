"""Backend selection for the batch kernels.

The compiled extension ``cmslab._core`` is used when it imports; otherwise the
numpy implementation in :mod:`cmslab._fallback` takes over. Set
``CMSLAB_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import _fallback
from .expr import OPNAMES, DomainError, Expr, compile_expr

log = logging.getLogger(__name__)

if os.environ.get("CMSLAB_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None
        log.debug("compiled kernels unavailable, using numpy fallback")

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled
DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"


def backend(name: str | None = None):
    return BACKENDS[name or DEFAULT_BACKEND]


@dataclass(frozen=True, eq=False)
class Pack:
    """All programs of a system flattened into contiguous arrays."""

    ops: np.ndarray          # int32
    args: np.ndarray         # int32
    consts: np.ndarray       # float64
    prog_start: np.ndarray   # int64, length n_programs + 1
    stack_size: int
    n_vertices: int
    n_edges: int
    region_prog: np.ndarray  # int32[N]
    prob_prog: np.ndarray    # int32[E]
    map_prog: np.ndarray     # int32[E, d]
    out_start: np.ndarray    # int64[N+1]
    out_edge: np.ndarray     # int32, edges grouped by source vertex
    edge_target: np.ndarray  # int32[E]


def build_pack(regions: list[Expr], probs: list[Expr], maps: list[tuple[Expr, ...]],
               sources: list[int], targets: list[int]) -> Pack:
    ops, args, consts, starts = [], [], [], [0]
    depth = 1

    def add(e: Expr) -> int:
        nonlocal depth
        p = compile_expr(e)
        base = len(consts)
        for op, arg in zip(p.ops, p.args):
            ops.append(op)
            args.append(arg + base if op == 0 else arg)
        consts.extend(p.consts)
        starts.append(len(ops))
        depth = max(depth, p.stack_depth)
        return len(starts) - 2

    region_prog = [add(r) for r in regions]
    prob_prog = [add(p) for p in probs]
    map_prog = [[add(c) for c in m] for m in maps]
    n = len(regions)
    order = sorted(range(len(sources)), key=lambda e: (sources[e], e))
    out_start = np.searchsorted(np.array([sources[e] for e in order], dtype=np.int64),
                                np.arange(n + 1), side="left")
    return Pack(
        ops=np.asarray(ops, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        prog_start=np.asarray(starts, dtype=np.int64),
        stack_size=depth,
        n_vertices=n,
        n_edges=len(probs),
        region_prog=np.asarray(region_prog, dtype=np.int32),
        prob_prog=np.asarray(prob_prog, dtype=np.int32),
        map_prog=np.asarray(map_prog, dtype=np.int32).reshape(len(maps), len(maps[0]) if maps else 0),
        out_start=out_start.astype(np.int64),
        out_edge=np.asarray(order, dtype=np.int32),
        edge_target=np.asarray(targets, dtype=np.int32),
    )


def _raise(X, row, op, what):
    name = "negative or missing probability" if op == _fallback.ERR_NEGATIVE_PROB else \
        f"domain error in '{OPNAMES.get(op, op)}'"
    raise DomainError(f"{name} while evaluating {what}", X[row])


def _points(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def eval_batch(pack: Pack, prog: int, X, *, what="expression", backend_name=None) -> np.ndarray:
    X = _points(X)
    out, row, op = backend(backend_name).eval_batch(pack, int(prog), X)
    if row >= 0:
        _raise(X, row, op, what)
    return np.asarray(out)


def edge_prob_matrix(pack: Pack, X, V, *, backend_name=None) -> np.ndarray:
    """P[i, e] = p_e(X[i]) for edges leaving V[i], zero for all other edges."""
    X = _points(X)
    V = np.ascontiguousarray(V, dtype=np.int32)
    P, row, op = backend(backend_name).edge_prob_matrix(pack, X, V)
    if row >= 0:
        _raise(X, row, op, "probability functions")
    return np.asarray(P)


def chain_step(pack: Pack, X, V, U, *, backend_name=None):
    """Advance every row one transition. Returns (points, vertices, edges)."""
    X = _points(X)
    V = np.ascontiguousarray(V, dtype=np.int32)
    U = np.ascontiguousarray(U, dtype=np.float64)
    Y, W, E, row, op = backend(backend_name).chain_step(pack, X, V, U)
    if row >= 0:
        _raise(X, row, op, "a chain step")
    return np.asarray(Y), np.asarray(W), np.asarray(E)


def apply_edges(pack: Pack, X, edges, *, backend_name=None) -> np.ndarray:
    X = _points(X)
    edges = np.ascontiguousarray(edges, dtype=np.int32)
    Y, row, op = backend(backend_name).apply_edges(pack, X, edges)
    if row >= 0:
        _raise(X, row, op, f"map of edge index {edges[row]}")
    return np.asarray(Y)


def compose_words(pack: Pack, X, words, guard: float = np.inf, *, backend_name=None):
    """Apply each row's word left to right. Returns (points, diverged mask)."""
    X = _points(X)
    words = np.ascontiguousarray(words, dtype=np.int32)
    if words.ndim == 1:
        words = words.reshape(1, -1)
    Y, D, row, op = backend(backend_name).compose_words(pack, X, words, float(guard))
    if row >= 0:
        _raise(X, row, op, "a map composition")
    return np.asarray(Y), np.asarray(D, dtype=bool)
