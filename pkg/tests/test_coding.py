import math

import numpy as np
import pytest

from cmslab import kernels
from cmslab.coding import (CONVERGED, DIVERGED, NOT_CONVERGED, CodeWindow, coding_convergence_profile,
                           coding_map, coding_map_batch, sample_code, sample_codes)
from cmslab.dynamics import moment_check


def test_window_basics(decimal_uniform, gmeasure):
    w = CodeWindow.ending_at([3, 1, 4])
    assert (w.start, w.stop, w[0], w[-2]) == (-2, 0, 4, 3)
    with pytest.raises(IndexError):
        w[1]
    assert w.admissible(decimal_uniform)
    # edges "00" then "11" do not connect
    assert not CodeWindow.ending_at([0, 3]).admissible(gmeasure)
    back = CodeWindow.from_json(w.to_json(decimal_uniform), decimal_uniform)
    assert back == w
    assert w.shifted().start == -3


@pytest.mark.parametrize("depth", [1, 3, 8, 20])
def test_decimal_expansion(decimal_uniform, depth):
    word = [0] * (depth - 3) + [3, 1, 4] if depth >= 3 else [4]
    r = coding_map(decimal_uniform, CodeWindow.ending_at(word))
    if depth >= 3:
        assert r.value[0] == pytest.approx(0.413, abs=10.0 ** -depth + 1e-15)
    if depth >= 20:
        assert r.status == CONVERGED
    if depth == 1:
        assert r.status == NOT_CONVERGED


def test_example3_limits(example3):
    r = coding_map(example3, CodeWindow.ending_at([0] * 60))
    assert r.status == CONVERGED and abs(r.value[0]) < 1e-8
    r = coding_map(example3, CodeWindow.ending_at([1] * 60))
    assert r.status == DIVERGED
    r = coding_map(example3.with_anchors([[0.0]]), CodeWindow.ending_at([1] * 60))
    assert r.status == CONVERGED and r.value[0] == 0.0


def test_max_depth_caps_prefix(decimal_uniform):
    r = coding_map(decimal_uniform, CodeWindow.ending_at([5] * 100), max_depth=10)
    assert r.depth == 10


def test_inadmissible_rejected(gmeasure):
    with pytest.raises(ValueError):
        coding_map(gmeasure, CodeWindow.ending_at([0, 3]))


def test_sampled_frequencies(decimal_uniform, mu_uniform):
    n = 100_000
    s = sample_codes(decimal_uniform, mu_uniform, n, 1, 1, seed=2)
    f = np.mean(s.column(1) == 7)
    assert abs(f - 0.1) <= 3 * math.sqrt(0.09 / n)
    f2 = np.mean((s.column(-1) == 2) & (s.column(0) == 5))
    assert abs(f2 - 0.01) <= 3 * math.sqrt(0.0099 / n)


def test_rebasing_is_shift_invariant(decimal_weighted, mu_weighted):
    from scipy.stats import chi2_contingency
    s = sample_codes(decimal_weighted, mu_weighted, 50_000, 5, 0, seed=9)
    a = np.bincount(s.column(0), minlength=10)
    b = np.bincount(s.column(-5), minlength=10)
    assert chi2_contingency(np.vstack([a, b])).pvalue > 0.001


def test_sample_code_single(decimal_uniform, mu_uniform):
    w, origin = sample_code(decimal_uniform, mu_uniform, 12, 2, seed=1)
    assert (w.start, w.stop) == (-12, 2)
    r = coding_map(decimal_uniform, w.restrict(w.start, 0), tol=1e-10)
    assert abs(r.value[0] - origin[0]) <= 1e-11


def test_equivariance(decimal_weighted, mu_weighted):
    s = sample_codes(decimal_weighted, mu_weighted, 2000, 30, 1, seed=5)
    F0, st0, _ = coding_map_batch(decimal_weighted, s.past)
    F1, st1, _ = coding_map_batch(decimal_weighted, s.words[:, 1:])
    ok = (st0 == 0) & (st1 == 0)
    moved = decimal_weighted.apply(F0[ok], s.future[ok, 0])
    assert ok.mean() > 0.99
    assert np.max(np.abs(F1[ok] - moved)) <= 2e-8


def test_anchor_independence(example3, mu_example3):
    s = sample_codes(example3, mu_example3, 5000, 400, 0, seed=3)
    a, sa, _ = coding_map_batch(example3, s.past)
    b, sb, _ = coding_map_batch(example3, s.past, anchors=[[-2.5]])
    ok = (sa == 0) & (sb == 0)
    assert ok.mean() >= 0.99
    assert np.mean(np.abs(a - b)[ok] <= 2e-8) >= 0.99


def test_divergence_vanishes_with_depth(example3, mu_example3):
    fr = []
    for depth in (8, 64):
        s = sample_codes(example3, mu_example3, 20_000, depth - 1, 0, seed=7)
        _, st, _ = coding_map_batch(example3, s.past)
        fr.append(np.mean(st == 2))
    assert fr[-1] <= 0.01


def test_profile_decimal(decimal_uniform, mu_uniform):
    prof = coding_convergence_profile(decimal_uniform, mu_uniform, [0, 1, 2, 3], 20_000, seed=0)
    C = moment_check(decimal_uniform, mu_uniform)
    for p in prof:
        bound = C * 0.1 ** (p["depth"] + 1)
        assert p["mean_distance"] <= bound + 3 * p["stderr"]
    assert prof[0]["mean_distance"] <= C


def test_profile_example3_slope(example3, mu_example3):
    depths = list(range(2, 17, 2))
    prof = coding_convergence_profile(example3, mu_example3, depths, 200_000, seed=0)
    y = np.log([p["mean_distance"] for p in prof])
    slope = np.polyfit(depths, y, 1)[0]
    assert slope <= math.log(45 / 48) + 0.01


def test_guard(example3):
    words = np.ones((1, 50), dtype=np.int32)
    _, status, diam = coding_map_batch(example3, words, guard=1e6)
    assert status[0] == 2 and math.isinf(diam[0])
    Y, div = kernels.compose_words(example3.pack, np.ones((1, 1)), words, 1e6)
    assert div[0] and abs(Y[0, 0]) > 1e6
