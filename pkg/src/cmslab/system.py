"""Contractive Markov systems: regions, per-edge maps and probabilities, and
sampling-based checks of the standing hypotheses."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import kernels, rng
from .expr import DomainError, Expr, evaluate, is_predicate, parse, to_source, variables
from .graph import DirectedMultigraph

__all__ = ["Region", "MarkovSystem", "SystemDefinitionError", "RegionError", "ValidationReport",
           "RateEstimate", "validate", "estimate_contraction_rate", "modulus_probe",
           "STOCHASTICITY_TOL"]

STOCHASTICITY_TOL = 1e-9
MAX_CONSECUTIVE_REJECTIONS = 10**4


class SystemDefinitionError(ValueError):
    pass


class RegionError(SystemDefinitionError):
    pass


@dataclass(frozen=True)
class Region:
    vertex: str
    predicate: Expr
    lower: tuple
    upper: tuple
    anchor: tuple

    @property
    def diameter(self) -> float:
        return math.dist(self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class MarkovSystem:
    """A Markov system on regions of R^d.

    Edges and vertices are stored in the graph's declaration order; ``maps[e]``
    is the tuple of d coordinate expressions of w_e and ``probs[e]`` is p_e.
    Each p_e is only ever evaluated on its own region K_{i(e)}; elsewhere it is
    treated as zero.
    """

    graph: DirectedMultigraph
    dim: int
    regions: tuple
    maps: tuple
    probs: tuple
    name: str = "system"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = self.graph
        g.check_surjective()
        if self.dim < 1:
            raise SystemDefinitionError("dimension must be >= 1")
        if len(self.regions) != g.n_vertices:
            raise SystemDefinitionError("need exactly one region per vertex")
        if len(self.maps) != g.n_edges or len(self.probs) != g.n_edges:
            raise SystemDefinitionError("need one map and one probability function per edge")
        for v, r in zip(g.vertices, self.regions):
            if r.vertex != v:
                raise SystemDefinitionError(f"regions must follow vertex order; got {r.vertex!r} for {v!r}")
            if not is_predicate(r.predicate):
                raise SystemDefinitionError(f"region {v!r}: membership must be a comparison or and/or")
            for name, vec in (("lower", r.lower), ("upper", r.upper), ("anchor", r.anchor)):
                if len(vec) != self.dim:
                    raise SystemDefinitionError(f"region {v!r}: {name} must have {self.dim} coordinates")
            if any(not (lo < hi) or not math.isfinite(lo) or not math.isfinite(hi)
                   for lo, hi in zip(r.lower, r.upper)):
                raise SystemDefinitionError(f"region {v!r}: bounding box must be finite and non-empty")
            self._check_vars(r.predicate, f"region {v!r}")
            if not evaluate(r.predicate, r.anchor):
                raise SystemDefinitionError(f"region {v!r}: anchor {tuple(r.anchor)} is not in the region")
        for k, e in enumerate(g.edges):
            if len(self.maps[k]) != self.dim:
                raise SystemDefinitionError(f"edge {e.id!r}: map needs {self.dim} coordinates")
            for c in self.maps[k]:
                self._check_vars(c, f"edge {e.id!r} map")
                if is_predicate(c):
                    raise SystemDefinitionError(f"edge {e.id!r}: map coordinates must be numeric")
            self._check_vars(self.probs[k], f"edge {e.id!r} probability")
            if is_predicate(self.probs[k]):
                raise SystemDefinitionError(f"edge {e.id!r}: probability must be numeric")

    def _check_vars(self, e: Expr, what: str):
        bad = [i for i in variables(e) if i > self.dim]
        if bad:
            raise SystemDefinitionError(f"{what}: x{bad[0]} exceeds dimension {self.dim}")

    # ---------------------------------------------------------------- derived

    @cached_property
    def pack(self) -> kernels.Pack:
        g = self.graph
        return kernels.build_pack(
            [r.predicate for r in self.regions], list(self.probs), list(self.maps),
            [g.source(e) for e in range(g.n_edges)], [g.target(e) for e in range(g.n_edges)])

    @cached_property
    def anchors(self) -> np.ndarray:
        return np.array([r.anchor for r in self.regions], dtype=np.float64)

    @cached_property
    def edge_source(self) -> np.ndarray:
        return np.array([self.graph.source(e) for e in range(self.graph.n_edges)], dtype=np.int32)

    @cached_property
    def edge_target(self) -> np.ndarray:
        return np.array([self.graph.target(e) for e in range(self.graph.n_edges)], dtype=np.int32)

    @property
    def edge_ids(self) -> list[str]:
        return [e.id for e in self.graph.edges]

    def describe(self) -> dict:
        g = self.graph
        return {
            "name": self.name,
            "dimension": self.dim,
            "vertices": [{"id": r.vertex, "region": to_source(r.predicate),
                          "lower": list(r.lower), "upper": list(r.upper),
                          "anchor": list(r.anchor)} for r in self.regions],
            "edges": [{"id": e.id, "from": e.source, "to": e.target,
                       "map": [to_source(c) for c in self.maps[k]],
                       "prob": to_source(self.probs[k])} for k, e in enumerate(g.edges)],
        }

    def with_anchors(self, anchors) -> "MarkovSystem":
        regions = tuple(Region(r.vertex, r.predicate, r.lower, r.upper, tuple(map(float, a)))
                        for r, a in zip(self.regions, anchors))
        return MarkovSystem(self.graph, self.dim, regions, self.maps, self.probs, self.name, self.meta)

    # ---------------------------------------------------------------- batch ops

    def contains(self, X, V) -> np.ndarray:
        """Mask of rows X[i] lying in region V[i]."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        V = np.asarray(V)
        out = np.zeros(len(X), dtype=bool)
        for v in range(self.graph.n_vertices):
            rows = np.flatnonzero(V == v)
            if rows.size:
                out[rows] = kernels.eval_batch(self.pack, self.pack.region_prog[v], X[rows],
                                               what=f"region {self.regions[v].vertex!r}") != 0
        return out

    def locate(self, X) -> np.ndarray:
        """Vertex index of the region containing each row, -1 if none."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        V = np.full(len(X), -1, dtype=np.int32)
        for v in range(self.graph.n_vertices):
            todo = np.flatnonzero(V < 0)
            if todo.size == 0:
                break
            inside = kernels.eval_batch(self.pack, self.pack.region_prog[v], X[todo]) != 0
            V[todo[inside]] = v
        return V

    def probabilities(self, X, V) -> np.ndarray:
        return kernels.edge_prob_matrix(self.pack, X, V)

    def apply(self, X, edges) -> np.ndarray:
        return kernels.apply_edges(self.pack, X, edges)

    def sample_region(self, v: int, n: int, gen: np.random.Generator) -> np.ndarray:
        """n points uniform on region v by rejection from its bounding box."""
        r = self.regions[v]
        lo, hi = np.asarray(r.lower), np.asarray(r.upper)
        pred = self.pack.region_prog[v]
        chunks, have, since_last = [], 0, 0
        batch = max(1024, 2 * n)
        while have < n:
            X = lo + (hi - lo) * gen.random((batch, self.dim))
            inside = kernels.eval_batch(self.pack, pred, X, what=f"region {r.vertex!r}") != 0
            idx = np.flatnonzero(inside)
            if idx.size:
                gaps = np.diff(np.concatenate(([-since_last - 1], idx))) - 1
                if gaps.max() >= MAX_CONSECUTIVE_REJECTIONS:
                    raise RegionError(f"region {r.vertex!r} looks empty: "
                                      f"{MAX_CONSECUTIVE_REJECTIONS} consecutive rejections")
                since_last = batch - 1 - idx[-1]
                chunks.append(X[idx])
                have += idx.size
            else:
                since_last += batch
            if since_last >= MAX_CONSECUTIVE_REJECTIONS and have < n:
                raise RegionError(f"region {r.vertex!r} looks empty: "
                                  f"{MAX_CONSECUTIVE_REJECTIONS} consecutive rejections")
        return np.concatenate(chunks)[:n]


# ---------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    samples: int
    seed: int
    vertices: list
    edges: list
    passed: bool
    problems: list

    def to_dict(self) -> dict:
        return asdict(self)


def validate(sys: MarkovSystem, samples: int = 10_000, seed: int = 0) -> ValidationReport:
    """Check stochasticity, non-negativity and w_e(K_i(e)) inside K_t(e) on sampled points."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    g = sys.graph
    vertices, edges, problems = [], [], []
    for v in range(g.n_vertices):
        X = sys.sample_region(v, samples, rng.stream(seed, "validate", v))
        V = np.full(samples, v, dtype=np.int32)
        out = g.out_edges(v)
        try:
            P = sys.probabilities(X, V)[:, out]
        except DomainError as exc:
            problems.append(f"vertex {g.vertices[v]!r}: {exc}")
            vertices.append({"vertex": g.vertices[v], "error": str(exc)})
            continue
        # correctly rounded row sums, so constant weights like 1/10 report 0
        defect = max(abs(math.fsum(row) - 1.0) for row in P)
        vertices.append({"vertex": g.vertices[v], "max_stochasticity_defect": defect,
                         "min_probability": float(P.min())})
        if defect > STOCHASTICITY_TOL:
            problems.append(f"vertex {g.vertices[v]!r}: probabilities sum off by {defect:.3g}")
        for j, e in enumerate(out):
            rec = {"edge": g.edges[e].id, "min_probability": float(P[:, j].min()),
                   "max_probability": float(P[:, j].max())}
            if rec["min_probability"] < 0:
                problems.append(f"edge {g.edges[e].id!r}: negative probability")
            t = g.target(e)
            try:
                Y = sys.apply(X, np.full(samples, e))
                bad = int(np.count_nonzero(~sys.contains(Y, np.full(samples, t))))
            except DomainError as exc:
                rec["error"] = str(exc)
                problems.append(f"edge {g.edges[e].id!r}: {exc}")
                bad = samples
            rec["region_violations"] = bad
            if bad:
                problems.append(f"edge {g.edges[e].id!r}: {bad} sampled images leave "
                                f"region {g.vertices[t]!r}")
            edges.append(rec)
    return ValidationReport(samples, seed, vertices, edges, not problems, problems)


# ---------------------------------------------------------------- contraction

@dataclass
class RateEstimate:
    rate: float
    lipschitz: float
    n_pairs: int
    argmax: list
    min_separation: float
    max_separation: float

    @property
    def contractive(self) -> bool:
        return self.rate < 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = "empirical" if self.contractive else "not verified contractive"
        return d


def _pairs(sys: MarkovSystem, v: int, n: int, gen, scales=(1e-6, 1.0)):
    """Same-region pairs: half independent, half at log-uniform separations."""
    X = sys.sample_region(v, n, gen)
    Y = np.empty_like(X)
    half = n // 2
    Y[:half] = sys.sample_region(v, half, gen)
    m = n - half
    diam = sys.regions[v].diameter
    lo, hi = np.log10(scales[0]), np.log10(scales[1])
    r = diam * 10.0 ** gen.uniform(lo, hi, m)
    u = gen.normal(size=(m, sys.dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    Y[half:] = X[half:] + r[:, None] * u
    V = np.full(n, v, dtype=np.int32)
    keep = sys.contains(Y, V) & np.any(X != Y, axis=1)
    return X[keep], Y[keep]


def estimate_contraction_rate(sys: MarkovSystem, pairs: int = 100_000, seed: int = 0) -> RateEstimate:
    """Sampled supremum of sum_e p_e(x) d(w_e x, w_e y) / d(x, y) over same-region pairs."""
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    g = sys.graph
    per = max(2, -(-pairs // g.n_vertices))
    best, best_at, lip, total = -np.inf, None, 0.0, 0
    seps = []
    for v in range(g.n_vertices):
        X, Y = _pairs(sys, v, per, rng.stream(seed, "rate", v))
        n = len(X)
        total += n
        V = np.full(n, v, dtype=np.int32)
        d = np.linalg.norm(X - Y, axis=1)
        seps.append(d)
        P = sys.probabilities(X, V)
        ratio = np.zeros(n)
        for e in g.out_edges(v):
            E = np.full(n, e)
            q = np.linalg.norm(sys.apply(X, E) - sys.apply(Y, E), axis=1) / d
            lip = max(lip, float(q.max()))
            ratio += P[:, e] * q
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, best_at = float(ratio[k]), X[k].tolist()
    seps = np.concatenate(seps)
    return RateEstimate(best, lip, total, best_at, float(seps.min()), float(seps.max()))


def modulus_probe(sys: MarkovSystem, edge: int, scales, seed: int = 0,
                  pairs_per_scale: int = 20_000) -> list[tuple[float, float]]:
    """Observed modulus of continuity of p_edge on its region at each scale t.

    Pairs from all scales are pooled, so the result is nondecreasing in t.
    """
    scales = sorted(float(t) for t in scales)
    if not scales or scales[0] <= 0:
        raise ValueError("scales must be positive")
    v = sys.graph.source(edge)
    gen = rng.stream(seed, "modulus", edge)
    Xs, Ys = [], []
    for t in scales:
        X = sys.sample_region(v, pairs_per_scale, gen)
        u = gen.normal(size=X.shape)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        Y = X + (t * gen.random(len(X)))[:, None] * u
        keep = sys.contains(Y, np.full(len(Y), v))
        Xs.append(X[keep])
        Ys.append(Y[keep])
    X, Y = np.concatenate(Xs), np.concatenate(Ys)
    d = np.linalg.norm(X - Y, axis=1)
    pe = sys.pack.prob_prog[edge]
    diff = np.abs(kernels.eval_batch(sys.pack, pe, X) - kernels.eval_batch(sys.pack, pe, Y))
    order = np.argsort(d, kind="stable")
    running = np.maximum.accumulate(diff[order])
    out = []
    for t in scales:
        k = np.searchsorted(d[order], t, side="right")
        out.append((t, float(running[k - 1]) if k else 0.0))
    return out


def build_system(*, name, vertices, edges, dim) -> MarkovSystem:
    """Assemble a system from plain records (used by config loading and presets).

    ``vertices``: dicts with id, region, lower, upper, anchor (sources as text).
    ``edges``: dicts with id, from, to, map (list of sources), prob (source).
    """
    g = DirectedMultigraph.from_pairs([v["id"] for v in vertices],
                                      [(e["id"], e["from"], e["to"]) for e in edges])
    regions = tuple(Region(str(v["id"]), parse(v["region"], dim),
                           tuple(map(float, v["lower"])), tuple(map(float, v["upper"])),
                           tuple(map(float, v["anchor"]))) for v in vertices)
    maps = tuple(tuple(parse(c, dim) for c in e["map"]) for e in edges)
    probs = tuple(parse(e["prob"], dim) for e in edges)
    return MarkovSystem(g, dim, regions, maps, probs, name=name)
