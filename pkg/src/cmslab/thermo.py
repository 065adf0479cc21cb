"""Generalized Markov measure on cylinders, the energy function, entropy and
the variational principle, checked by sampling."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .coding import (CONVERGED, DEFAULT_TOL, DIVERGED, DIVERGENCE_GUARD, NOT_CONVERGED,
                     STATUS_NAMES, CodeWindow, coding_map, coding_map_batch, sample_codes)
from .dynamics import ParticleEnsemble
from .expr import evaluate
from .oracle import OracleResult, transfer_operator_fixed_point  # noqa: F401
from .graph import admissible_words, is_admissible
from .stats import sliced_ks, weighted_mean_se
from .system import MarkovSystem, modulus_probe

log = logging.getLogger(__name__)

__all__ = ["CylinderMeasureResult", "EnergyEvaluation", "CompetitorMeasure",
           "cylinder_measure", "energy", "energy_batch", "energy_expectation",
           "entropy_formula", "block_entropy", "variational_gap", "pushforward_check",
           "conditional_expectation_test", "random_competitor", "uniform_competitor", "xlogx",
           "transfer_operator_fixed_point", "OracleResult"]


def xlogx(p):
    """p log p with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


# ---------------------------------------------------------------- cylinders

@dataclass
class CylinderMeasureResult:
    word: tuple
    estimate: float
    stderr: float
    method: str


def cylinder_products(sys: MarkovSystem, mu: ParticleEnsemble, word) -> np.ndarray:
    """Per-particle p_{e1}(x) p_{e2}(w_{e1} x) ... p_{ek}(w_{e_{k-1}} ... w_{e1} x)."""
    X, V = mu.points, mu.vertices
    prod = np.ones(len(mu))
    live = np.arange(len(mu))
    for e in word:
        if live.size == 0:
            break
        P = sys.probabilities(X[live], V[live])[:, e]
        prod[live] *= P
        keep = P > 0
        live = live[keep]
        if live.size:
            X = X.copy()
            X[live] = sys.apply(X[live], np.full(live.size, e))
            V = V.copy()
            V[live] = sys.edge_target[e]
    return prod


def cylinder_measure(sys: MarkovSystem, mu: ParticleEnsemble, word,
                     mode: str = "quadrature") -> CylinderMeasureResult:
    """M of the cylinder [e1..ek] as an integral of the product of probabilities
    along the orbit against mu. ``exact-split`` treats mu as the exact measure
    (e.g. an ensemble built with split-mode pushes) and reports zero error."""
    word = tuple(int(e) for e in word)
    methods = {"quadrature": "quadrature-over-ensemble", "exact-split": "exact-split"}
    if mode not in methods:
        raise ValueError(f"unknown mode {mode!r}")
    method = methods[mode]
    if not word or not is_admissible(sys.graph, word):
        return CylinderMeasureResult(word, 0.0, 0.0, method)
    m, se = weighted_mean_se(cylinder_products(sys, mu, word), mu.weights)
    return CylinderMeasureResult(word, m, 0.0 if mode == "exact-split" else se, method)


# ---------------------------------------------------------------- energy

@dataclass
class EnergyEvaluation:
    window: CodeWindow
    u: float
    status: str
    error_bar: float = 0.0


def energy(sys: MarkovSystem, window: CodeWindow, tol: float = DEFAULT_TOL,
           max_depth: int = 10**4, guard: float = DIVERGENCE_GUARD) -> EnergyEvaluation:
    """u(sigma) = log p_{sigma_1}(F(sigma)), or -inf when the past diverges."""
    if window.stop < 1 or window.start > 0:
        raise ValueError("window must cover indices [m, 1] with m <= 0")
    res = coding_map(sys, window.restrict(window.start, 0), tol, max_depth, guard)
    if res.status == DIVERGED:
        return EnergyEvaluation(window, -math.inf, DIVERGED)
    e1 = window[1]
    p = evaluate(sys.probs[e1], res.value)
    u = math.log(p) if p > 0 else -math.inf
    err = 0.0
    if res.status == NOT_CONVERGED and p > 0:
        if math.isfinite(res.diameter_bound):
            phi = modulus_probe(sys, e1, [res.diameter_bound], seed=0, pairs_per_scale=4000)[0][1]
            err = phi / p
        else:
            err = math.inf
    return EnergyEvaluation(window, u, res.status, err)


def energy_batch(sys: MarkovSystem, past, nxt, tol: float = DEFAULT_TOL,
                 guard: float = DIVERGENCE_GUARD, anchors=None):
    """u for many codes: *past* is (n, L) ending at sigma_0, *nxt* holds sigma_1.

    Returns (u, status) with u = -inf for diverged pasts.
    """
    F, status, _ = coding_map_batch(sys, past, tol, guard, anchors)
    u = np.full(len(F), -np.inf)
    ok = status != 2
    if ok.any():
        idx = np.flatnonzero(ok)
        P = sys.probabilities(F[idx], sys.edge_source[nxt[idx]])
        p = P[np.arange(idx.size), nxt[idx]]
        with np.errstate(divide="ignore"):
            u[idx] = np.log(p)
    return u, status


def energy_expectation(sys: MarkovSystem, mu: ParticleEnsemble, n_samples: int,
                       past_depth: int, seed: int = 0, tol: float = DEFAULT_TOL) -> dict:
    """Monte Carlo estimate of E_M[u] from codes sampled under M."""
    s = sample_codes(sys, mu, n_samples, past_depth, 1, seed, "energy")
    u, status = energy_batch(sys, s.past, s.future[:, 0], tol)
    return _summarize_energy(u, status)


def _summarize_energy(u, status) -> dict:
    """Mean of u under the divergence policy: more than one diverged sample in
    n makes the mean -inf; the mean over finite samples is always reported."""
    finite = np.isfinite(u)
    n = len(u)
    m, se = weighted_mean_se(u[finite]) if finite.sum() > 1 else (-math.inf, 0.0)
    n_inf = int(n - finite.sum())
    return {"mean": m if n_inf <= 1 else -math.inf, "finite_mean": m, "stderr": se,
            "n_samples": n, "diverged_fraction": float(np.mean(status == 2)),
            "not_converged_fraction": float(np.mean(status == 1))}


# ---------------------------------------------------------------- entropy

def entropy_formula(sys: MarkovSystem, mu: ParticleEnsemble) -> tuple[float, float]:
    """-sum_e int p_e log p_e dmu, with its Monte Carlo standard error."""
    P = sys.probabilities(mu.points, mu.vertices)
    h = -xlogx(P).sum(axis=1)
    return weighted_mean_se(h, mu.weights)


def _block_codes(words, k, base):
    codes = np.zeros(len(words), dtype=np.int64)
    for j in range(k):
        codes = codes * base + words[:, j]
    return codes


def block_entropy(sys: MarkovSystem, mu: ParticleEnsemble, max_len: int, n_samples: int,
                  seed: int = 0, cap: int = 10**6, blocks_per_code: int = 1) -> dict:
    """Plug-in block entropies H_k of k-blocks of M-sampled codes, k = 1..max_len.

    Each of the n_samples codes is read over a window of max_len *
    blocks_per_code letters, cut into consecutive non-overlapping k-blocks.
    By shift invariance every block has the law of M on k-cylinders. The
    Miller-Madow correction (distinct - 1) / (2 N) is reported alongside.
    """
    E = sys.graph.n_edges
    if E ** max_len > np.iinfo(np.int64).max:
        raise ValueError("max_len too large to index blocks")
    if blocks_per_code < 1:
        raise ValueError("blocks_per_code must be >= 1")
    L = max_len * blocks_per_code
    dense = [E ** k <= 10**7 for k in range(1, max_len + 1)]
    counts = [np.zeros(E ** k, dtype=np.int64) if dense[k - 1] else [] for k in range(1, max_len + 1)]
    cur = [np.zeros(n_samples, dtype=np.int64) for _ in range(max_len)]
    X, V = mu.resample(n_samples, rng.stream(seed, "blocks", "start"))
    for t in range(L):
        X, V, letters = kernels.chain_step(sys.pack, X, V, rng.uniforms(seed, n_samples, "blocks", "step", t))
        for k in range(1, max_len + 1):
            c = cur[k - 1]
            c *= E
            c += letters
            if (t + 1) % k == 0:
                if dense[k - 1]:
                    counts[k - 1] += np.bincount(c, minlength=E ** k)
                else:
                    counts[k - 1].append(c.copy())
                c[:] = 0
    h_formula, h_se = entropy_formula(sys, mu)
    rows, warnings = [], []
    for k in range(1, max_len + 1):
        if dense[k - 1]:
            cnt = counts[k - 1][counts[k - 1] > 0]
        else:
            _, cnt = np.unique(np.concatenate(counts[k - 1]), return_counts=True)
        if len(cnt) > cap:
            raise ValueError(f"{len(cnt)} distinct {k}-blocks exceed the cap {cap}")
        N = int(cnt.sum())
        f = cnt / N
        logf = np.log(f)
        H = float(-np.sum(f * logf))
        second = float(np.sum(f * logf ** 2))
        se = math.sqrt(max(second - H * H, 0.0) / N)
        mm = H + (len(cnt) - 1) / (2 * N)
        if len(cnt) > N / 100:
            warnings.append(f"k={k}: {len(cnt)} distinct blocks for {N} blocks (undersampled)")
        rows.append({"k": k, "n_blocks": N, "H": H, "H_per_symbol": H / k,
                     "stderr_per_symbol": se / k,
                     "miller_madow": mm, "miller_madow_per_symbol": mm / k,
                     "distinct": int(len(cnt)),
                     "gap_to_formula": H / k - h_formula,
                     "miller_madow_gap_to_formula": mm / k - h_formula})
    for w in warnings:
        log.warning(w)
    return {"blocks": rows, "entropy_formula": h_formula, "entropy_formula_stderr": h_se,
            "n_samples": n_samples, "blocks_per_code": blocks_per_code, "warnings": warnings}


# ---------------------------------------------------------------- competitors

@dataclass
class CompetitorMeasure:
    """Stationary order-k Markov measure on admissible edge words."""

    order: int
    states: list              # admissible k-words (tuples of edge indices)
    transitions: np.ndarray   # (S, S) row-stochastic, supported on admissible shifts
    stationary: np.ndarray = field(init=False)

    def __post_init__(self):
        T = np.asarray(self.transitions, dtype=np.float64)
        if np.max(np.abs(T.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("competitor rows must sum to one")
        index = {w: i for i, w in enumerate(self.states)}
        for i, w in enumerate(self.states):
            for j in np.flatnonzero(T[i]):
                if self.states[j][:-1] != w[1:]:
                    raise ValueError("transition between non-overlapping words")
        self.transitions = T
        self._index = index
        self.stationary = _stationary(T)

    @property
    def entropy(self) -> float:
        """h = -sum_w pi_w sum_w' Q log Q."""
        return float(-np.dot(self.stationary, xlogx(self.transitions).sum(axis=1)))

    def sample_paths(self, n: int, length: int, gen: np.random.Generator) -> np.ndarray:
        """n stationary paths of *length* edges."""
        k = self.order
        if length < k:
            raise ValueError("paths must be at least as long as the order")
        S = len(self.states)
        cdf = np.cumsum(self.stationary)
        state = np.minimum(np.searchsorted(cdf, gen.random(n) * cdf[-1], side="right"), S - 1)
        states = np.array(self.states, dtype=np.int32)
        out = np.empty((n, length), dtype=np.int32)
        out[:, :k] = states[state]
        Tc = np.cumsum(self.transitions, axis=1)
        for t in range(k, length):
            u = gen.random(n) * Tc[state, -1]
            nxt = (Tc[state] <= u[:, None]).sum(axis=1)
            state = np.minimum(nxt, S - 1)
            out[:, t] = states[state][:, -1]
        return out

    def to_dict(self, sys: MarkovSystem) -> dict:
        ids = sys.edge_ids
        return {"order": self.order,
                "states": ["".join(ids[e] for e in w) if all(len(ids[x]) == 1 for x in w)
                           else [ids[e] for e in w] for w in self.states],
                "entropy": self.entropy}


def _stationary(T: np.ndarray) -> np.ndarray:
    S = len(T)
    A = np.vstack([T.T - np.eye(S), np.ones(S)])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0, None)
    pi /= pi.sum()
    # a few power steps polish the least-squares solution
    for _ in range(50):
        nxt = pi @ T
        if np.max(np.abs(nxt - pi)) <= 1e-15:
            break
        pi = nxt
    return pi / pi.sum()


def competitor_states(sys: MarkovSystem, order: int) -> list:
    return admissible_words(sys.graph, order)


def random_competitor(sys: MarkovSystem, order: int, gen: np.random.Generator,
                      concentration: float = 1.0) -> CompetitorMeasure:
    """Dirichlet-random transition weights on admissible k-word shifts."""
    states = competitor_states(sys, order)
    index = {w: i for i, w in enumerate(states)}
    T = np.zeros((len(states), len(states)))
    for i, w in enumerate(states):
        succ = [index[w[1:] + (e,)] for e in range(sys.graph.n_edges)
                if sys.graph.follows(w[-1], e)]
        T[i, succ] = gen.dirichlet(np.full(len(succ), concentration))
    return CompetitorMeasure(order, states, T)


def uniform_competitor(sys: MarkovSystem, order: int = 1) -> CompetitorMeasure:
    states = competitor_states(sys, order)
    index = {w: i for i, w in enumerate(states)}
    T = np.zeros((len(states), len(states)))
    for i, w in enumerate(states):
        succ = [index[w[1:] + (e,)] for e in range(sys.graph.n_edges)
                if sys.graph.follows(w[-1], e)]
        T[i, succ] = 1.0 / len(succ)
    return CompetitorMeasure(order, states, T)


def variational_gap(sys: MarkovSystem, mu: ParticleEnsemble | None, theta: CompetitorMeasure,
                    n_samples: int, past_depth: int, seed: int = 0,
                    tol: float = DEFAULT_TOL) -> dict:
    """h_theta + theta(u) for one competitor.

    theta(u) averages u over stationary theta-paths covering indices
    -past_depth..1, with F evaluated from the anchors. Diverged codes have
    u = -inf: one diverged sample in n is tolerated (the finite mean is used);
    more force the gap to -inf, flagged as a "-inf candidate".
    """
    paths = theta.sample_paths(n_samples, past_depth + 2, rng.stream(seed, "gap"))
    u, status = energy_batch(sys, paths[:, :-1], paths[:, -1], tol)
    summary = _summarize_energy(u, status)
    h = theta.entropy
    gap = h + summary["mean"]
    return {"entropy": h, "theta_u": summary["mean"], "theta_u_finite": summary["finite_mean"],
            "stderr": summary["stderr"], "gap": gap,
            "finite_gap": h + summary["finite_mean"],
            "diverged_fraction": summary["diverged_fraction"],
            "annotation": "-inf candidate" if summary["diverged_fraction"] > 1 / n_samples else "",
            "n_samples": n_samples, "past_depth": past_depth}


# ---------------------------------------------------------------- F(M) = mu

def pushforward_check(sys: MarkovSystem, mu: ParticleEnsemble, n_samples: int, past_depth: int,
                      seed: int = 0, tol: float = DEFAULT_TOL) -> dict:
    """Compare the law of F under M (anchors as starting points) with mu."""
    s = sample_codes(sys, mu, n_samples, past_depth, 0, seed, "pushforward")
    F, status, _ = coding_map_batch(sys, s.past, tol)
    finite = status != 2
    ks, per = sliced_ks(F[finite], mu.points, None, mu.weights)
    return {"ks": ks, "ks_per_coordinate": per, "n_samples": n_samples, "past_depth": past_depth,
            "not_converged_fraction": float(np.mean(status != 0)),
            "diverged_fraction": float(np.mean(status == 2))}


# ---------------------------------------------------------------- E(1[e] | past) = p_e o F

def conditional_expectation_test(sys: MarkovSystem, mu: ParticleEnsemble, n_samples: int,
                                 past_len: int, seed: int = 0, min_bin: int = 200,
                                 coding_depth: int = 20, z: float = 3.0,
                                 tol: float = DEFAULT_TOL) -> dict:
    """Bin M-sampled codes by their past word sigma_{-past_len..0}; inside each
    populated bin compare the frequency of sigma_1 = e with the bin mean of
    p_e(F).

    The band per bin and edge is z binomial standard errors plus the modulus
    of p_e at the largest spread of F inside any populated bin. With many
    bins some comparisons leave a 3 sigma band by chance alone, so the report
    also counts exceedances and gives their expected number under exact
    binomial sampling.
    """
    from scipy.stats import binom, poisson

    if past_len < 1:
        raise ValueError("past_len must be >= 1")
    depth = max(past_len, coding_depth)
    s = sample_codes(sys, mu, n_samples, depth, 1, seed, "condexp")
    F, status, _ = coding_map_batch(sys, s.past, tol)
    nxt = s.future[:, 0]
    E = sys.graph.n_edges
    key = _block_codes(s.past[:, depth - past_len:], past_len + 1, E)
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    keep = counts >= min_bin
    P = sys.probabilities(F, s.vertices)
    nb = len(uniq)
    hits = np.zeros((nb, E))
    np.add.at(hits, (inverse, nxt), 1.0)
    psum = np.zeros((nb, E))
    np.add.at(psum, inverse, P)
    lo = np.full((nb, F.shape[1]), np.inf)
    hi = np.full((nb, F.shape[1]), -np.inf)
    np.minimum.at(lo, inverse, F)
    np.maximum.at(hi, inverse, F)
    spread = float(np.max(hi[keep] - lo[keep])) if keep.any() else 0.0

    modulus = np.array([modulus_probe(sys, e, [max(spread, 1e-300)], seed,
                                      pairs_per_scale=20000)[0][1] for e in range(E)])
    vertex = np.zeros(nb, dtype=np.int64)
    vertex[inverse] = sys.edge_target[s.past[:, -1]]
    out_mask = sys.edge_source[None, :] == vertex[:, None]
    sel = keep[:, None] & out_mask
    c = np.broadcast_to(counts[:, None], (nb, E))[sel].astype(np.float64)
    freq = hits[sel] / c
    expect = psum[sel] / c
    sigma = np.sqrt(np.clip(expect * (1 - expect), 0, None) / c)
    band = z * sigma + np.broadcast_to(modulus, (nb, E))[sel]
    disc = np.abs(freq - expect)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(band > 0, disc / band, np.where(disc == 0, 0.0, np.inf))
        zs = np.where(sigma > 0, disc / sigma, 0.0)
    exceed = disc > band
    # exact binomial probability of landing outside the band, per comparison
    n_int = np.rint(c)
    p_out = (binom.sf(np.ceil(n_int * (expect + band)) - 1, n_int, expect)
             + binom.cdf(np.floor(n_int * (expect - band) - 1e-9), n_int, expect))
    p_out = np.where(expect - band < 0, binom.sf(np.ceil(n_int * (expect + band)) - 1, n_int, expect), p_out)
    expected_exceed = float(np.sum(p_out))
    n_exceed = int(exceed.sum())
    # one-sided 3 sigma (0.99865) Poisson quantile for the exceedance count
    exceed_limit = int(poisson.ppf(0.99865, expected_exceed)) if expected_exceed > 0 else 0

    rows = []
    ids = sys.edge_ids
    bin_idx, edge_idx = np.nonzero(sel)
    for j, (b, e) in enumerate(zip(bin_idx, edge_idx)):
        word = []
        k = int(uniq[b])
        for _ in range(past_len + 1):
            word.append(ids[k % E])
            k //= E
        rows.append({"past": list(reversed(word)), "edge": ids[e], "count": int(c[j]),
                     "frequency": float(freq[j]), "expected": float(expect[j]),
                     "discrepancy": float(disc[j]), "sigma": float(sigma[j]),
                     "band": float(band[j])})
    return {"past_len": past_len, "n_samples": n_samples, "min_bin": min_bin,
            "populated_bins": int(keep.sum()), "n_comparisons": int(sel.sum()),
            "max_discrepancy": float(disc.max()) if disc.size else 0.0,
            "max_band": float(band.max()) if band.size else 0.0,
            "max_ratio": float(ratio.max()) if ratio.size else 0.0,
            "max_z": float(zs.max()) if zs.size else 0.0,
            "bin_spread": spread, "modulus": modulus.tolist(),
            "within_band": bool(sel.any()) and bool(np.all(ratio <= 1.0)),
            "n_exceed": n_exceed, "expected_exceed": expected_exceed,
            "exceed_limit": exceed_limit,
            "exceedances_consistent": bool(sel.any()) and n_exceed <= exceed_limit,
            "not_converged_fraction": float(np.mean(status != 0)), "bins": rows}
