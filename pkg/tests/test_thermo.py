import math

import numpy as np
import pytest

from cmslab import rng, thermo
from cmslab.coding import CodeWindow
from cmslab.dynamics import ParticleEnsemble, estimate_invariant_measure
from cmslab.graph import admissible_words
from cmslab.system import build_system

LOG10 = math.log(10)


def const_system(probs):
    return build_system(name="c", dim=1,
                        vertices=[{"id": "v", "region": "x1 >= 0 and x1 <= 1", "lower": [0],
                                   "upper": [1], "anchor": [0]}],
                        edges=[{"id": str(k), "from": "v", "to": "v",
                                "map": [f"x1/{len(probs)} + {k}/{len(probs)}"], "prob": p}
                               for k, p in enumerate(probs)])


def cycle2():
    return build_system(name="cyc", dim=1,
                        vertices=[{"id": "1", "region": "x1 >= 0 and x1 <= 1", "lower": [0], "upper": [1], "anchor": [0]},
                                  {"id": "2", "region": "x1 >= 2 and x1 <= 3", "lower": [2], "upper": [3], "anchor": [2]}],
                        edges=[{"id": "a", "from": "1", "to": "2", "map": ["x1/2 + 2"], "prob": "1"},
                               {"id": "b", "from": "2", "to": "1", "map": ["(x1 - 2)/2"], "prob": "1"}])


def test_cylinder_constant(decimal_uniform, mu_uniform):
    r = thermo.cylinder_measure(decimal_uniform, mu_uniform, (3, 1, 4))
    assert r.estimate == pytest.approx(0.001, abs=1e-15)
    assert r.method == "quadrature-over-ensemble"
    r = thermo.cylinder_measure(decimal_uniform, mu_uniform, (3, 1), mode="exact-split")
    assert r.stderr == 0


def test_cylinder_inadmissible():
    sys = cycle2()
    mu = estimate_invariant_measure(sys, 1000, rate=0.5)
    r = thermo.cylinder_measure(sys, mu, (0, 0))
    assert (r.estimate, r.stderr) == (0.0, 0.0)
    assert thermo.cylinder_measure(sys, mu, (0, 1)).estimate == pytest.approx(0.5, abs=0.05)


def small(mu, n=5000):
    return ParticleEnsemble.uniform(mu.points[:n], mu.vertices[:n])


def test_chapman_kolmogorov(decimal_weighted, mu_weighted):
    mu_weighted = small(mu_weighted)
    gen = rng.stream(0, "ck")
    for _ in range(20):
        w = tuple(int(e) for e in gen.integers(0, 10, gen.integers(1, 3)))
        prods = thermo.cylinder_products(decimal_weighted, mu_weighted, w)
        ext = sum(thermo.cylinder_products(decimal_weighted, mu_weighted, (e,) + w) for e in range(10))
        ext_r = sum(thermo.cylinder_products(decimal_weighted, mu_weighted, w + (e,)) for e in range(10))
        np.testing.assert_allclose(ext_r, prods, rtol=1e-12)
        # left extension holds on average only (stationarity of mu)
        lhs = np.mean(ext)
        rhs = np.mean(prods)
        se = math.hypot(np.std(ext), np.std(prods)) / math.sqrt(len(prods))
        assert abs(lhs - rhs) <= 3 * se + 1e-15


def test_cylinder_levels_sum_to_one(decimal_weighted, mu_weighted):
    mu_weighted = small(mu_weighted, 2000)
    for k in (1, 2, 3):
        tot = sum(thermo.cylinder_measure(decimal_weighted, mu_weighted, w).estimate
                  for w in admissible_words(decimal_weighted.graph, k))
        assert tot == pytest.approx(1.0, abs=1e-9)


def test_energy_examples(decimal_uniform, example3):
    ev = thermo.energy(decimal_uniform, CodeWindow.ending_at([3, 1, 4], 1))
    assert ev.u == pytest.approx(math.log(0.1))
    ev = thermo.energy(example3, CodeWindow.ending_at([0] * 61, 1))
    assert ev.u == pytest.approx(math.log(17 / 24)) and ev.status == "converged"
    ev = thermo.energy(example3, CodeWindow.ending_at([1] * 61, 1))
    assert ev.u == -math.inf and ev.status == "diverged"
    with pytest.raises(ValueError):
        thermo.energy(example3, CodeWindow.ending_at([0, 0], 0))


def test_energy_error_bar(decimal_weighted):
    ev = thermo.energy(decimal_weighted, CodeWindow.ending_at([2, 5, 7], 1))
    assert ev.status == "not-converged" and 0 < ev.error_bar < 1
    assert abs(ev.u) < 10


def test_energy_nonpositive(decimal_weighted, mu_weighted):
    from cmslab.coding import sample_codes
    s = sample_codes(decimal_weighted, mu_weighted, 5000, 12, 1, seed=1)
    u, status = thermo.energy_batch(decimal_weighted, s.past, s.future[:, 0])
    assert np.all(u[status == 0] <= 0)


def test_entropy_formula_examples(decimal_uniform, mu_uniform):
    h, _ = thermo.entropy_formula(decimal_uniform, mu_uniform)
    assert h == pytest.approx(LOG10, abs=1e-12)
    one = const_system(["1"])
    assert thermo.entropy_formula(one, ParticleEnsemble.at([0.2], 0))[0] == 0
    two = const_system(["0.3", "0.7"])
    h, _ = thermo.entropy_formula(two, ParticleEnsemble.at([0.2], 0))
    assert h == pytest.approx(-0.3 * math.log(0.3) - 0.7 * math.log(0.7))


def test_entropy_bounds(decimal_weighted, mu_weighted):
    h, _ = thermo.entropy_formula(decimal_weighted, mu_weighted)
    assert 0 <= h <= LOG10


def test_block_entropy_uniform(decimal_uniform, mu_uniform):
    r = thermo.block_entropy(decimal_uniform, mu_uniform, 3, 200_000, seed=1)
    for b in r["blocks"]:
        assert abs(b["H_per_symbol"] - LOG10) <= 3 * b["stderr_per_symbol"] + b["distinct"] / (2 * b["n_blocks"] * b["k"])
    hs = [b["H_per_symbol"] for b in r["blocks"]]
    se = [b["stderr_per_symbol"] for b in r["blocks"]]
    assert all(hs[k + 1] <= hs[k] + 3 * se[k] for k in range(len(hs) - 1))


def test_block_entropy_deterministic_system():
    sys = const_system(["1"])
    mu = ParticleEnsemble.at([0.0], 0)
    r = thermo.block_entropy(sys, mu, 4, 1000)
    assert all(b["H"] == 0 for b in r["blocks"])


def test_block_entropy_subadditive(decimal_weighted, mu_weighted):
    r = thermo.block_entropy(decimal_weighted, mu_weighted, 4, 200_000, seed=2, blocks_per_code=3)
    b = r["blocks"]
    for k in range(3):
        assert b[k + 1]["H_per_symbol"] <= b[k]["H_per_symbol"] + 3 * b[k]["stderr_per_symbol"]


def test_undersampling_warning(decimal_uniform, mu_uniform):
    r = thermo.block_entropy(decimal_uniform, mu_uniform, 4, 10_000)
    assert any("k=4" in w for w in r["warnings"])


def test_competitor_invariants(decimal_weighted):
    gen = rng.stream(0, "t")
    for order in (1, 2):
        c = thermo.random_competitor(decimal_weighted, order, gen)
        assert np.max(np.abs(c.transitions.sum(axis=1) - 1)) <= 1e-12
        assert np.max(np.abs(c.stationary @ c.transitions - c.stationary)) <= 1e-10
        assert 0 <= c.entropy <= LOG10
    c = thermo.random_competitor(cycle2(), 1, gen)
    assert c.transitions[0, 0] == 0 and c.transitions[0, 1] == pytest.approx(1)
    with pytest.raises(ValueError):
        thermo.CompetitorMeasure(1, [(0,), (1,)], np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_uniform_competitor_gap(decimal_weighted, mu_weighted):
    r = thermo.variational_gap(decimal_weighted, mu_weighted, thermo.uniform_competitor(decimal_weighted),
                               20_000, 12, seed=0)
    assert r["entropy"] == pytest.approx(LOG10)
    assert r["gap"] < -5 * r["stderr"]


def test_self_consistency(decimal_weighted, mu_weighted):
    h, h_se = thermo.entropy_formula(decimal_weighted, mu_weighted)
    e = thermo.energy_expectation(decimal_weighted, mu_weighted, 50_000, 12, seed=3)
    assert abs(h + e["mean"]) <= 3 * math.hypot(h_se, e["stderr"])


def test_gap_divergence_policy():
    u = np.array([-1.0, -1.0, -np.inf, -1.0])
    s = thermo._summarize_energy(u, np.array([0, 0, 2, 0]))
    assert s["mean"] == -1.0
    s = thermo._summarize_energy(np.array([-1.0, -np.inf, -np.inf]), np.array([0, 2, 2]))
    assert s["mean"] == -math.inf and s["diverged_fraction"] == pytest.approx(2 / 3)


def test_pushforward_uniform(decimal_uniform, mu_uniform):
    r = thermo.pushforward_check(decimal_uniform, mu_uniform, 100_000, 12, seed=0)
    assert r["ks"] <= 0.01


def test_pushforward_trend(decimal_weighted, mu_weighted):
    ks = [thermo.pushforward_check(decimal_weighted, mu_weighted, 50_000, d, seed=1)["ks"] for d in (0, 1, 4)]
    assert ks[0] > ks[1] > 0 and ks[2] <= ks[1]
    # at depths 4, 8, 16 the coding error is far below sampling noise
    ks = [thermo.pushforward_check(decimal_weighted, mu_weighted, 50_000, d, seed=1)["ks"] for d in (4, 8, 16)]
    assert ks[2] <= ks[0] + 0.01 and max(ks) <= 0.02


def test_pushforward_point_mass():
    sys = build_system(name="half", dim=1,
                       vertices=[{"id": "v", "region": "abs(x1) <= 1", "lower": [-1], "upper": [1], "anchor": [1]}],
                       edges=[{"id": "e", "from": "v", "to": "v", "map": ["x1/2"], "prob": "1"}])
    mu = estimate_invariant_measure(sys, 1000, rate=0.5)
    from cmslab.coding import coding_map_batch
    F, status, _ = coding_map_batch(sys, np.zeros((10, 80), dtype=np.int32))
    assert np.all(np.abs(F) <= 1e-8) and np.all(status == 0)


def test_condexp_constant(decimal_uniform, mu_uniform):
    r = thermo.conditional_expectation_test(decimal_uniform, mu_uniform, 300_000, 1, seed=0)
    assert r["populated_bins"] == 100
    assert all(b["expected"] == pytest.approx(0.1) for b in r["bins"])
    assert r["exceedances_consistent"]


def test_condexp_band_shrinks(decimal_weighted, mu_weighted):
    small = thermo.conditional_expectation_test(decimal_weighted, mu_weighted, 200_000, 1, seed=0, min_bin=1)
    large = thermo.conditional_expectation_test(decimal_weighted, mu_weighted, 200_000, 3, seed=0, min_bin=1)
    assert max(large["modulus"]) < max(small["modulus"]) / 50
    assert small["exceedances_consistent"]
