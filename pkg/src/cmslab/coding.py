"""The coding map F via backward compositions, and sampling of codes under
the generalized Markov measure M."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels, rng
from .dynamics import ParticleEnsemble
from .graph import is_admissible
from .system import MarkovSystem

__all__ = ["CodeWindow", "CodingResult", "CodeSample", "CONVERGED", "NOT_CONVERGED",
           "DIVERGED", "coding_map", "coding_map_batch", "sample_code", "sample_codes",
           "coding_convergence_profile", "DEFAULT_TOL", "DEFAULT_MAX_DEPTH", "DIVERGENCE_GUARD"]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_DEPTH = 10**4
DIVERGENCE_GUARD = 1e12

CONVERGED, NOT_CONVERGED, DIVERGED = "converged", "not-converged", "diverged"
STATUS_NAMES = (CONVERGED, NOT_CONVERGED, DIVERGED)


@dataclass(frozen=True)
class CodeWindow:
    """Finite piece (sigma_start, ..., sigma_stop) of a code, as edge indices."""

    edges: tuple
    start: int

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(int(e) for e in self.edges))
        if not self.edges:
            raise ValueError("empty code window")

    @classmethod
    def ending_at(cls, edges, last_index: int = 0) -> "CodeWindow":
        return cls(tuple(edges), last_index - len(edges) + 1)

    @property
    def stop(self) -> int:
        return self.start + len(self.edges) - 1

    def __getitem__(self, i: int) -> int:
        if not self.start <= i <= self.stop:
            raise IndexError(f"index {i} outside window [{self.start}, {self.stop}]")
        return self.edges[i - self.start]

    def admissible(self, sys: MarkovSystem) -> bool:
        return is_admissible(sys.graph, self.edges)

    def restrict(self, lo: int, hi: int) -> "CodeWindow":
        lo, hi = max(lo, self.start), min(hi, self.stop)
        return CodeWindow(self.edges[lo - self.start:hi - self.start + 1], lo)

    def shifted(self) -> "CodeWindow":
        """The same letters seen from the left shift S: index i moves to i - 1."""
        return CodeWindow(self.edges, self.start - 1)

    def to_json(self, sys: MarkovSystem) -> str:
        ids = sys.edge_ids
        return json.dumps({"origin": -self.start, "edges": [ids[e] for e in self.edges]})

    @classmethod
    def from_json(cls, text: str, sys: MarkovSystem) -> "CodeWindow":
        d = json.loads(text)
        idx = sys.graph.edge_index
        return cls(tuple(idx[str(e)] for e in d["edges"]), -int(d["origin"]))


@dataclass
class CodingResult:
    value: np.ndarray
    status: str
    diameter_bound: float
    depth: int

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _half_columns(L: int) -> int:
    """Columns kept by the half-depth run for a past of L letters (indices -(L-1)..0)."""
    return (L - 1) // 2 + 1


def coding_map_batch(sys: MarkovSystem, words, tol: float = DEFAULT_TOL,
                     guard: float = DIVERGENCE_GUARD, anchors=None):
    """Evaluate F on many pasts at once.

    *words* is (n, L): column 0 holds sigma_{-(L-1)}, the last column sigma_0.
    Returns ``(values, status, diameter)`` where status holds indices into
    :data:`STATUS_NAMES`.
    """
    words = np.ascontiguousarray(np.atleast_2d(words), dtype=np.int32)
    n, L = words.shape
    A = sys.anchors if anchors is None else np.asarray(anchors, dtype=np.float64).reshape(len(sys.anchors), -1)
    src = sys.edge_source
    full, div_full = kernels.compose_words(sys.pack, A[src[words[:, 0]]], words, guard)
    h = _half_columns(L)
    if h < L:
        sub = words[:, L - h:]
        half, div_half = kernels.compose_words(sys.pack, A[src[sub[:, 0]]], sub, guard)
        diam = np.linalg.norm(full - half, axis=1)
    else:
        div_half = np.zeros(n, dtype=bool)
        diam = np.full(n, np.inf)
    diverged = div_full | div_half
    status = np.where(diverged, 2, np.where(diam <= tol, 0, 1)).astype(np.int8)
    diam = np.where(diverged, np.inf, diam)
    return full, status, diam


def coding_map(sys: MarkovSystem, window: CodeWindow, tol: float = DEFAULT_TOL,
               max_depth: int = DEFAULT_MAX_DEPTH, guard: float = DIVERGENCE_GUARD,
               anchors=None) -> CodingResult:
    """Approximate F(sigma) from the window's letters at indices <= 0."""
    if window.start > 0 or window.stop < 0:
        raise ValueError("window must cover index 0 and some index <= 0")
    if not window.admissible(sys):
        raise ValueError("window is not admissible for the graph")
    past = window.restrict(max(window.start, -(max_depth - 1)), 0)
    vals, status, diam = coding_map_batch(sys, np.array([past.edges]), tol, guard, anchors)
    return CodingResult(vals[0], STATUS_NAMES[status[0]], float(diam[0]), len(past.edges))


# ---------------------------------------------------------------- sampling

@dataclass
class CodeSample:
    """Windows sigma_{-past_depth..future_len} drawn from M, one per row."""

    words: np.ndarray      # (n, past_depth + 1 + future_len), column j is index j - past_depth
    origins: np.ndarray    # (n, d) chain point right after sigma_0 was applied
    vertices: np.ndarray   # (n,) vertex of the origin point
    past_depth: int
    future_len: int

    @property
    def past(self) -> np.ndarray:
        """Columns for indices -past_depth .. 0."""
        return self.words[:, :self.past_depth + 1]

    @property
    def future(self) -> np.ndarray:
        return self.words[:, self.past_depth + 1:]

    def column(self, index: int) -> np.ndarray:
        return self.words[:, index + self.past_depth]

    def window(self, row: int) -> CodeWindow:
        return CodeWindow(tuple(self.words[row]), -self.past_depth)


def sample_codes(sys: MarkovSystem, mu: ParticleEnsemble, n: int, past_depth: int,
                 future_len: int = 0, seed: int = 0, label: str = "codes") -> CodeSample:
    """Draw x ~ mu and run the chain past_depth + 1 + future_len steps.

    The first past_depth + 1 letters are re-based onto indices -past_depth..0.
    Because M is shift invariant this gives the law of M on those cylinders.
    """
    if past_depth < 0 or future_len < 0:
        raise ValueError("depths must be non-negative")
    X, V = mu.resample(n, rng.stream(seed, label, "start"))
    L = past_depth + 1 + future_len
    words = np.empty((n, L), dtype=np.int32)
    origins = origin_v = None
    for t in range(L):
        X, V, E = kernels.chain_step(sys.pack, X, V, rng.uniforms(seed, n, label, "step", t))
        words[:, t] = E
        if t == past_depth:
            origins, origin_v = X.copy(), V.copy()
    return CodeSample(words, origins, origin_v, past_depth, future_len)


def sample_code(sys: MarkovSystem, mu: ParticleEnsemble, past_depth: int, future_len: int,
                seed: int = 0) -> tuple[CodeWindow, np.ndarray]:
    s = sample_codes(sys, mu, 1, past_depth, future_len, seed)
    return s.window(0), s.origins[0]


def coding_convergence_profile(sys: MarkovSystem, mu: ParticleEnsemble, depths, n_samples: int,
                               seed: int = 0) -> list[dict]:
    """Mean distance between the true chain point at index 0 and the
    anchor-started composition over sigma_m..sigma_0, for each |m| in *depths*.

    The chain point before sigma_m is mu-distributed, so the true point is the
    composition started there.
    """
    depths = sorted(int(m) for m in depths)
    s = sample_codes(sys, mu, n_samples, max(depths), 0, seed, "profile")
    out = []
    for m in depths:
        sub = np.ascontiguousarray(s.past[:, s.past_depth - m:])
        Y, div = kernels.compose_words(sys.pack, sys.anchors[sys.edge_source[sub[:, 0]]], sub)
        dist = np.linalg.norm(Y - s.origins, axis=1)
        out.append({"depth": m, "mean_distance": float(dist.mean()),
                    "stderr": float(dist.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0})
    return out
