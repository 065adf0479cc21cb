"""Transfer-operator oracle for g-measures: the stationary law of the finite
chain on k-word states, computed without any sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .graph import DirectedMultigraph, admissible_words, is_irreducible

__all__ = ["OracleError", "OracleResult", "transfer_operator_fixed_point",
           "two_state_stationary", "gmeasure_potential", "MAX_ITERATIONS"]

MAX_ITERATIONS = 10**5
NORMALIZATION_TOL = 1e-12


class OracleError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass
class OracleResult:
    order: int
    states: list             # admissible k-words, edge index tuples
    distribution: np.ndarray
    transitions: np.ndarray
    iterations: int
    residual: float

    def word_measure(self, word) -> float:
        """Measure of the cylinder of an edge word of any length >= order."""
        word = tuple(int(e) for e in word)
        k = self.order
        if len(word) < k:
            # marginalize over the admissible extensions
            return float(sum(p for w, p in zip(self.states, self.distribution)
                             if w[:len(word)] == word))
        index = {w: i for i, w in enumerate(self.states)}
        if word[:k] not in index:
            return 0.0
        i = index[word[:k]]
        total = float(self.distribution[i])
        for e in word[k:]:
            j = index.get(self.states[i][1:] + (e,))
            if j is None:
                return 0.0
            total *= self.transitions[i, j]
            i = j
        return total

    def as_dict(self) -> dict:
        return {w: float(p) for w, p in zip(self.states, self.distribution)}


def transfer_operator_fixed_point(g: Callable | Mapping, graph: DirectedMultigraph, order: int = 1,
                                  tol: float = 1e-14, max_iter: int = MAX_ITERATIONS) -> OracleResult:
    """Stationary distribution on admissible *order*-words for the potential g.

    g(word, e) is the probability of appending edge e after the k-word *word*;
    a mapping keyed by (word, e) works as well. Rows must sum to one over the
    admissible successors. The iteration is the lazy map nu -> nu (I + T) / 2,
    which has the same fixed point and also converges on periodic graphs.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if not is_irreducible(graph):
        raise ValueError("graph must be irreducible")
    gf = g if callable(g) else (lambda w, e: g[(w, e)])
    states = admissible_words(graph, order)
    index = {w: i for i, w in enumerate(states)}
    S = len(states)
    T = np.zeros((S, S))
    for i, w in enumerate(states):
        for e in range(graph.n_edges):
            if not graph.follows(w[-1], e):
                continue
            val = float(gf(w, e))
            if not val > 0:
                raise ValueError(f"g must be positive, got {val} at {w} -> {e}")
            T[i, index[w[1:] + (e,)]] = val
        row = T[i].sum()
        if abs(row - 1) > NORMALIZATION_TOL:
            raise ValueError(f"g is not normalized after {w}: row sums to {row!r}")
    nu = np.full(S, 1.0 / S)
    residual = np.inf
    for it in range(1, max_iter + 1):
        nxt = 0.5 * (nu + nu @ T)
        nxt /= nxt.sum()
        residual = 0.5 * float(np.abs(nxt - nu).sum())
        nu = nxt
        if residual <= tol:
            return OracleResult(order, states, nu, T, it, residual)
    raise OracleError(f"no convergence after {max_iter} iterations (residual {residual:.3e})",
                      residual)


def two_state_stationary(q01: float, q10: float) -> np.ndarray:
    """Closed form for the chain with P(0 -> 1) = q01 and P(1 -> 0) = q10."""
    return np.array([q10, q01]) / (q01 + q10)


def gmeasure_potential(sys) -> Callable:
    """Order-1 potential for the 2-symbol g-measure system: after edge a->b,
    edge b->c has probability G[b][c]."""
    G = sys.meta["g"]
    ids = sys.edge_ids
    return lambda w, e: G[int(ids[w[-1]][1])][int(ids[e][1])]

