import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cmslab.graph import (DirectedMultigraph, EnumerationCapExceeded, GraphError,
                          ReducibleGraphError, admissible_words, is_admissible, is_aperiodic,
                          is_irreducible, period)


def g(vertices, pairs):
    return DirectedMultigraph.from_pairs(vertices, pairs)


DECIMAL = g(["I"], [(str(e), "I", "I") for e in range(10)])
CYCLE2 = g(["1", "2"], [("a", "1", "2"), ("b", "2", "1")])


def test_irreducibility_examples():
    assert is_irreducible(g(["v"], [("e", "v", "v")]))
    assert is_irreducible(DECIMAL)
    assert not is_irreducible(g(["1", "2"], [("e", "1", "2")]))


def test_aperiodicity_examples():
    assert is_aperiodic(g(["v"], [("e", "v", "v")]))
    assert not is_aperiodic(CYCLE2)
    assert period(CYCLE2) == 2
    assert is_aperiodic(g(["R"], [("0", "R", "R"), ("1", "R", "R")]))
    with pytest.raises(ReducibleGraphError):
        is_aperiodic(g(["1", "2"], [("e", "1", "2")]))


def test_admissible_word_examples():
    assert len(admissible_words(DECIMAL, 2)) == 100
    assert admissible_words(CYCLE2, 3) == [(0, 1, 0), (1, 0, 1)]
    assert admissible_words(CYCLE2, 1) == [(0,), (1,)]
    assert is_admissible(CYCLE2, (0, 1)) and not is_admissible(CYCLE2, (0, 0))


def test_enumeration_cap():
    with pytest.raises(EnumerationCapExceeded):
        admissible_words(DECIMAL, 7)
    with pytest.raises(ValueError):
        admissible_words(DECIMAL, 0)


def test_malformed_graphs():
    with pytest.raises(GraphError):
        g(["1"], [("e", "1", "2")])
    with pytest.raises(GraphError):
        g(["1", "1"], [])
    with pytest.raises(GraphError):
        g(["1"], [("e", "1", "1"), ("e", "1", "1")])
    with pytest.raises(GraphError):
        g(["1", "2"], [("e", "1", "2")]).check_surjective()


@st.composite
def random_graphs(draw):
    n = draw(st.integers(1, 6))
    m = draw(st.integers(1, 12))
    pairs = [(f"e{k}", str(draw(st.integers(0, n - 1))), str(draw(st.integers(0, n - 1))))
             for k in range(m)]
    return g([str(v) for v in range(n)], pairs)


def _reach_matrix(graph):
    n = graph.n_vertices
    A = np.eye(n, dtype=np.int64)
    for e in range(graph.n_edges):
        A[graph.source(e), graph.target(e)] = 1
    R = np.linalg.matrix_power(A, n) > 0
    return R


@given(random_graphs())
def test_irreducible_matches_matrix_power(graph):
    assert is_irreducible(graph) == bool(_reach_matrix(graph).all())


def _cycle_gcd(graph):
    # gcd of closed walk lengths up to 2n through matrix powers
    from math import gcd
    n = graph.n_vertices
    A = np.zeros((n, n), dtype=np.int64)
    for e in range(graph.n_edges):
        A[graph.source(e), graph.target(e)] = 1
    out, P = 0, np.eye(n, dtype=np.int64)
    for k in range(1, 2 * n + 1):
        P = np.minimum(P @ A, 1)
        if np.trace(P) > 0:
            out = gcd(out, k)
    return out


@given(random_graphs())
def test_period_matches_closed_walks(graph):
    if is_irreducible(graph):
        assert period(graph) == _cycle_gcd(graph)


@given(random_graphs(), st.integers(1, 3))
def test_words_extend(graph, k):
    longer = admissible_words(graph, k + 1)
    shorter = set(admissible_words(graph, k))
    assert {w[:k] for w in longer} <= shorter
    brute = [w for w in itertools.product(range(graph.n_edges), repeat=k + 1)
             if all(graph.follows(a, b) for a, b in zip(w, w[1:]))]
    assert sorted(longer) == sorted(brute)
