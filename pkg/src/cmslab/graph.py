"""Finite directed multigraphs (V, E, i, t) and their structural properties."""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from math import gcd

__all__ = ["Edge", "DirectedMultigraph", "GraphError", "ReducibleGraphError",
           "EnumerationCapExceeded", "is_irreducible", "is_aperiodic", "admissible_words"]

DEFAULT_WORD_CAP = 10**6


class GraphError(ValueError):
    pass


class ReducibleGraphError(GraphError):
    pass


class EnumerationCapExceeded(GraphError):
    pass


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str


@dataclass(frozen=True)
class DirectedMultigraph:
    """Vertices and edges keep their user-supplied string ids; ``index`` maps
    them to dense 0-based positions in declaration order."""

    vertices: tuple
    edges: tuple
    vertex_index: dict = field(init=False, repr=False, compare=False)
    edge_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = tuple(str(v) for v in self.vertices)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "edges", tuple(self.edges))
        if not vertices:
            raise GraphError("graph needs at least one vertex")
        if len(set(vertices)) != len(vertices):
            raise GraphError("duplicate vertex id")
        vi = {v: k for k, v in enumerate(vertices)}
        ei = {}
        for e in self.edges:
            for end in (e.source, e.target):
                if end not in vi:
                    raise GraphError(f"edge {e.id!r} references undefined vertex {end!r}")
            if e.id in ei:
                raise GraphError(f"duplicate edge id {e.id!r}")
            ei[e.id] = len(ei)
        object.__setattr__(self, "vertex_index", vi)
        object.__setattr__(self, "edge_index", ei)

    @classmethod
    def from_pairs(cls, vertices, pairs) -> "DirectedMultigraph":
        """Build from ``(edge_id, source, target)`` triples."""
        return cls(tuple(vertices), tuple(Edge(str(e), str(s), str(t)) for e, s, t in pairs))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def source(self, e: int) -> int:
        return self.vertex_index[self.edges[e].source]

    def target(self, e: int) -> int:
        return self.vertex_index[self.edges[e].target]

    def out_edges(self, v: int) -> list[int]:
        name = self.vertices[v]
        return [k for k, e in enumerate(self.edges) if e.source == name]

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in self.vertices]
        for k in range(self.n_edges):
            adj[self.source(k)].add(self.target(k))
        return adj

    def check_surjective(self) -> None:
        """Every vertex must be the initial vertex of some edge."""
        missing = [v for v in self.vertices if not any(e.source == v for e in self.edges)]
        if missing:
            raise GraphError(f"vertices without outgoing edges: {missing}")

    def follows(self, e: int, f: int) -> bool:
        """True if edge f may come right after edge e: t(e) = i(f)."""
        return self.target(e) == self.source(f)


def _reach(adj, start) -> set[int]:
    seen = {start}
    todo = [start]
    while todo:
        v = todo.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def is_irreducible(g: DirectedMultigraph) -> bool:
    adj = g.adjacency()
    radj = [set() for _ in adj]
    for v, ws in enumerate(adj):
        for w in ws:
            radj[w].add(v)
    n = g.n_vertices
    return len(_reach(adj, 0)) == n and len(_reach(radj, 0)) == n


def period(g: DirectedMultigraph) -> int:
    """gcd of all cycle lengths, from BFS levels: gcd over edges of level(u)+1-level(v)."""
    if not is_irreducible(g):
        raise ReducibleGraphError("period is only defined for irreducible graphs")
    adj = g.adjacency()
    level = {0: 0}
    q = deque([0])
    while q:
        v = q.popleft()
        for w in adj[v]:
            if w not in level:
                level[w] = level[v] + 1
                q.append(w)
    p = 0
    for v, ws in enumerate(adj):
        for w in ws:
            p = gcd(p, level[v] + 1 - level[w])
    return abs(p)


def is_aperiodic(g: DirectedMultigraph) -> bool:
    return period(g) == 1


def admissible_words(g: DirectedMultigraph, length: int, cap: int = DEFAULT_WORD_CAP):
    """All edge-index tuples of *length* with t(e_j) = i(e_{j+1}), in lexicographic order."""
    if length < 1:
        raise ValueError("length must be >= 1")
    succ = [[f for f in range(g.n_edges) if g.follows(e, f)] for e in range(g.n_edges)]
    # count first so the cap is enforced before materializing anything
    counts = [1] * g.n_edges
    for _ in range(length - 1):
        counts = [sum(counts[f] for f in succ[e]) for e in range(g.n_edges)]
        if sum(counts) > cap:
            raise EnumerationCapExceeded(f"more than {cap} admissible words of length {length}")
    words = [(e,) for e in range(g.n_edges)]
    for _ in range(length - 1):
        words = [w + (f,) for w in words for f in succ[w[-1]]]
    return words


def is_admissible(g: DirectedMultigraph, word) -> bool:
    return all(g.follows(a, b) for a, b in itertools.pairwise(word))
