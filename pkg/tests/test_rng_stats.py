import numpy as np
import pytest
from scipy import stats as sps

from cmslab import rng
from cmslab.stats import ks_distance, ks_to_cdf, sliced_ks, weighted_mean_se


def test_streams_reproducible_and_distinct():
    a = rng.uniforms(5, 10, "x", 1)
    assert np.array_equal(a, rng.uniforms(5, 10, "x", 1))
    assert not np.array_equal(a, rng.uniforms(5, 10, "x", 2))
    assert not np.array_equal(a, rng.uniforms(6, 10, "x", 1))


def test_prefix_stability():
    # drawing more numbers does not change the first ones
    assert np.array_equal(rng.uniforms(0, 100, "s")[:10], rng.uniforms(0, 10, "s"))


def test_ks_matches_scipy():
    gen = np.random.default_rng(0)
    a, b = gen.random(500), gen.random(700) ** 1.1
    assert ks_distance(a, b) == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)
    assert ks_to_cdf(a, lambda x: x) == pytest.approx(sps.kstest(a, "uniform").statistic, abs=1e-12)


def test_weighted_ks_duplicates():
    # doubling a point is the same as giving it weight 2
    a = np.array([0.1, 0.2, 0.2, 0.9])
    b = np.array([0.1, 0.2, 0.9])
    assert ks_distance(a, [0.5]) == ks_distance(b, [0.5], wa=[1, 2, 1])


def test_sliced_and_mean():
    A = np.column_stack([np.linspace(0, 1, 50), np.zeros(50)])
    d, per = sliced_ks(A, A)
    assert d == 0 and per == [0, 0]
    m, se = weighted_mean_se([1.0, 3.0], [0.5, 0.5])
    assert m == 2.0 and se == pytest.approx(1.0 / np.sqrt(2))
