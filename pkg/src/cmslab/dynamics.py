"""The Markov process of a system, its operators U and U*, and particle
estimates of the invariant measure."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from . import kernels, rng
from .expr import Expr, evaluate
from .system import MarkovSystem, estimate_contraction_rate

__all__ = ["ChainState", "ParticleEnsemble", "ChainRun", "EnsembleCapExceeded",
           "step", "run_chain", "trajectory", "apply_markov_operator", "push_ensemble",
           "estimate_invariant_measure", "moment_check", "ergodic_average",
           "default_burn_in", "sliced_wasserstein"]

WEIGHT_TOL = 1e-9
DEFAULT_SPLIT_CAP = 10**7


class EnsembleCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainState:
    point: tuple
    vertex: int


@dataclass
class ParticleEnsemble:
    points: np.ndarray    # (n, d)
    vertices: np.ndarray  # (n,) vertex indices
    weights: np.ndarray   # (n,) positive, summing to one
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        self.points = pts.reshape(-1, 1) if pts.ndim == 1 else pts
        self.vertices = np.asarray(self.vertices, dtype=np.int32)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if np.any(self.weights <= 0):
            raise ValueError("particle weights must be positive")
        if abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")

    @classmethod
    def uniform(cls, points, vertices, **info) -> "ParticleEnsemble":
        n = len(vertices)
        return cls(points, vertices, np.full(n, 1.0 / n), dict(info))

    @classmethod
    def at(cls, point, vertex: int) -> "ParticleEnsemble":
        return cls(np.array([point], dtype=np.float64), [vertex], [1.0])

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self, values) -> float:
        return float(np.dot(self.weights, values))

    def stderr(self, values) -> float:
        """Standard error of the weighted mean, using the effective sample size."""
        values = np.asarray(values, dtype=np.float64)
        m = self.mean(values)
        var = float(np.dot(self.weights, (values - m) ** 2))
        ess = 1.0 / float(np.dot(self.weights, self.weights))
        return math.sqrt(var / ess) if ess > 1 else 0.0

    def resample(self, n: int, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """n points drawn from the ensemble's law (with replacement)."""
        if np.all(self.weights == self.weights[0]):
            idx = gen.integers(0, len(self), n)
        else:
            cdf = np.cumsum(self.weights)
            idx = np.minimum(np.searchsorted(cdf, gen.random(n) * cdf[-1], side="right"),
                             len(self) - 1)
        return self.points[idx], self.vertices[idx]

    def to_csv(self, path, vertex_ids=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.dim)] + ["vertex", "weight"])
            for p, v, wt in zip(self.points, self.vertices, self.weights):
                vid = vertex_ids[v] if vertex_ids is not None else int(v)
                w.writerow([repr(float(c)) for c in p] + [vid, repr(float(wt))])


def observable(f: Expr):
    """Vectorized evaluator for a single expression over rows of points."""
    pk = kernels.build_pack([f], [], [], [], [])
    return lambda X: kernels.eval_batch(pk, 0, X, what="observable")


# ------------------------------------------------------------------ one chain

def step(sys: MarkovSystem, state: ChainState, u) -> tuple[int, ChainState]:
    """One transition. *u* is a uniform draw in [0, 1) or a Generator to take it from."""
    if isinstance(u, np.random.Generator):
        u = u.random()
    Y, W, E = kernels.chain_step(sys.pack, np.array([state.point], dtype=np.float64),
                                 np.array([state.vertex]), np.array([float(u)]))
    return int(E[0]), ChainState(tuple(Y[0]), int(W[0]))


def trajectory(sys: MarkovSystem, x0, word) -> np.ndarray:
    """Points visited when following a fixed edge word from x0 (length len(word)+1)."""
    X = np.array([x0], dtype=np.float64).reshape(1, -1)
    out = [X[0].copy()]
    for e in word:
        X = sys.apply(X, [e])
        out.append(X[0].copy())
    return np.array(out)


@dataclass
class ChainRun:
    word: np.ndarray
    final: tuple
    means: dict
    points: np.ndarray | None = None


def _start_vertex(sys: MarkovSystem, x0) -> int:
    v = int(sys.locate(np.array([x0], dtype=np.float64))[0])
    if v < 0:
        raise ValueError(f"starting point {tuple(x0)} lies in no region")
    return v


def run_chain(sys: MarkovSystem, x0, n_steps: int, seed: int = 0,
              observables: dict[str, Expr] | None = None, keep_points: bool = False) -> ChainRun:
    """Simulate n_steps transitions from x0; returns the edge word and running
    means of the given observables over the visited points (after each step)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    v = _start_vertex(sys, x0)
    X = x0.reshape(1, -1)
    V = np.array([v], dtype=np.int32)
    U = rng.uniforms(seed, n_steps, "chain")
    word = np.empty(n_steps, dtype=np.int32)
    pts = np.empty((n_steps, sys.dim))
    for t in range(n_steps):
        X, V, E = kernels.chain_step(sys.pack, X, V, U[t:t + 1])
        word[t] = E[0]
        pts[t] = X[0]
    means = {name: float(np.mean(observable(f)(pts))) for name, f in (observables or {}).items()}
    return ChainRun(word, tuple(X[0]), means, pts if keep_points else None)


# ------------------------------------------------------------------ operators

def apply_markov_operator(sys: MarkovSystem, f: Expr, x) -> float:
    """Uf(x) = sum over edges leaving x's vertex of p_e(x) f(w_e x)."""
    x = tuple(float(c) for c in np.asarray(x, dtype=np.float64).reshape(-1))
    v = _start_vertex(sys, x)
    total = 0.0
    for e in sys.graph.out_edges(v):
        p = evaluate(sys.probs[e], x)
        if p == 0:
            continue
        y = tuple(evaluate(c, x) for c in sys.maps[e])
        total += p * evaluate(f, y)
    return total


def push_ensemble(sys: MarkovSystem, ens: ParticleEnsemble, seed: int = 0, *,
                  mode: str = "stochastic", step_index: int = 0,
                  cap: int = DEFAULT_SPLIT_CAP) -> ParticleEnsemble:
    """One application of U* to the ensemble's measure.

    ``split``: every particle branches into its weighted images (exact).
    ``stochastic``: every particle moves along one randomly drawn edge.
    """
    if mode == "split":
        P = sys.probabilities(ens.points, ens.vertices)
        rows, edges = np.nonzero(P > 0)
        if len(rows) > cap:
            raise EnsembleCapExceeded(f"split would create {len(rows)} particles (cap {cap})")
        Y = sys.apply(ens.points[rows], edges)
        w = ens.weights[rows] * P[rows, edges]
        return ParticleEnsemble(Y, sys.edge_target[edges], w, dict(ens.info))
    if mode != "stochastic":
        raise ValueError(f"unknown mode {mode!r}")
    U = rng.uniforms(seed, len(ens), "push", step_index)
    Y, W, _ = kernels.chain_step(sys.pack, ens.points, ens.vertices, U)
    return ParticleEnsemble(Y, W, ens.weights.copy(), dict(ens.info))


def sliced_wasserstein(a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    """Exact 1-D W1 in d = 1; for d >= 2 the maximum over coordinate slices."""
    return max(wasserstein_distance(a.points[:, j], b.points[:, j], a.weights, b.weights)
               for j in range(a.dim))


def default_burn_in(rate: float, target: float = 1e-6) -> int:
    if not 0 < rate < 1:
        raise ValueError(f"need an empirical contraction rate in (0, 1), got {rate}")
    return max(1, math.ceil(math.log(target) / math.log(rate)))


def anchor_ensemble(sys: MarkovSystem, n: int) -> ParticleEnsemble:
    """n particles spread evenly over the region anchors."""
    V = np.arange(n, dtype=np.int32) % sys.graph.n_vertices
    return ParticleEnsemble.uniform(sys.anchors[V], V)


def estimate_invariant_measure(sys: MarkovSystem, n_particles: int = 100_000,
                               burn_in: int | None = None, seed: int = 0, *,
                               rate: float | None = None, threshold: float = 0.01,
                               rate_pairs: int = 20_000) -> ParticleEnsemble:
    """Particle approximation of the invariant measure.

    Starts at the anchors and applies ``burn_in`` stochastic U* steps. The
    returned ensemble's ``info`` carries the W1 distance between the ensembles
    at burn_in // 2 and burn_in, and a ``converged`` flag against *threshold*.
    """
    if burn_in is None:
        if rate is None:
            rate = estimate_contraction_rate(sys, rate_pairs, seed).rate
        burn_in = default_burn_in(rate)
    ens = anchor_ensemble(sys, n_particles)
    half = None
    for t in range(burn_in):
        ens = push_ensemble(sys, ens, seed, step_index=t)
        if t + 1 == burn_in // 2:
            half = ens
    diag = sliced_wasserstein(half, ens) if half is not None else float("nan")
    ens.info = {"burn_in": burn_in, "rate": rate, "seed": seed, "n_particles": n_particles,
                "w1_half_vs_final": diag,
                "converged": bool(diag <= threshold) if half is not None else False}
    return ens


def moment_check(sys: MarkovSystem, ens: ParticleEnsemble) -> float:
    """Weighted sum of distances of particles to their region's anchor."""
    d = np.linalg.norm(ens.points - sys.anchors[ens.vertices], axis=1)
    return ens.mean(d)


def ergodic_average(sys: MarkovSystem, f: Expr, x0, n_steps: int, n_chains: int,
                    seed: int = 0) -> tuple[float, float]:
    """(1/n) sum_{k=1..n} U^k f(x0), estimated by averaging f along independent
    chains from x0. Returns (estimate, standard error across chains)."""
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    v = _start_vertex(sys, x0)
    X = np.tile(x0, (n_chains, 1))
    V = np.full(n_chains, v, dtype=np.int32)
    fx = observable(f)
    acc = np.zeros(n_chains)
    for t in range(n_steps):
        X, V, _ = kernels.chain_step(sys.pack, X, V, rng.uniforms(seed, n_chains, "ergodic", t))
        acc += fx(X)
    acc /= n_steps
    se = float(acc.std(ddof=1) / math.sqrt(n_chains)) if n_chains > 1 else float("nan")
    return float(acc.mean()), se
