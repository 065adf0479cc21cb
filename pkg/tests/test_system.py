import numpy as np
import pytest

from cmslab import presets
from cmslab.system import (RegionError, SystemDefinitionError, build_system,
                           estimate_contraction_rate, modulus_probe, validate)


def one_vertex(edges, region="x1 >= 0 and x1 <= 1", lower=0.0, upper=1.0, anchor=0.0):
    return build_system(name="t", dim=1,
                        vertices=[{"id": "v", "region": region, "lower": [lower],
                                   "upper": [upper], "anchor": [anchor]}],
                        edges=[{"id": str(k), "from": "v", "to": "v", "map": [m], "prob": p}
                               for k, (m, p) in enumerate(edges)])


def test_presets_validate():
    for name in presets.PRESETS:
        assert validate(presets.load_preset(name), 2000, 0).passed, name


def test_decimal_validation(decimal_uniform):
    rep = validate(decimal_uniform, 10_000, 0).to_dict()
    v = rep["vertices"][0]
    assert v["max_stochasticity_defect"] == 0
    assert v["min_probability"] == pytest.approx(0.1, abs=1e-15)


def test_example3_min_p1(example3):
    rep = validate(example3, 10_000, 0).to_dict()
    p1 = [e for e in rep["edges"] if e["edge"] == "1"][0]
    assert p1["min_probability"] == pytest.approx(0.125, abs=1e-4)
    assert p1["min_probability"] >= 0.125 - 1e-15


def test_stochasticity_defect_reported():
    sys = one_vertex([("x1/2", "0.6"), ("x1/3", "0.6")])
    rep = validate(sys, 1000, 0)
    assert not rep.passed
    assert rep.to_dict()["vertices"][0]["max_stochasticity_defect"] == pytest.approx(0.2)


def test_region_violation_reported():
    sys = one_vertex([("x1 + 0.5", "1")])
    rep = validate(sys, 1000, 0)
    assert not rep.passed
    assert rep.to_dict()["edges"][0]["region_violations"] > 0


def test_validate_deterministic(decimal_weighted):
    assert validate(decimal_weighted, 500, 3).to_dict() == validate(decimal_weighted, 500, 3).to_dict()


def test_empty_region():
    with pytest.raises(SystemDefinitionError):
        one_vertex([("x1", "1")], region="x1 > 2", anchor=0.5)
    sys = one_vertex([("x1", "1")], region="x1 >= 0 and x1 <= 1e-300", anchor=0.0)
    with pytest.raises(RegionError):
        validate(sys, 100, 0)


def test_rate_examples(example3, decimal_uniform):
    r = estimate_contraction_rate(example3, 100_000, 0)
    assert abs(r.rate - 45 / 48) <= 1e-4
    assert r.rate <= r.lipschitz
    assert estimate_contraction_rate(decimal_uniform, 10_000, 0).rate == pytest.approx(0.1, abs=1e-9)
    ident = one_vertex([("x1", "0.5"), ("x1", "0.5")])
    r = estimate_contraction_rate(ident, 5000, 0)
    assert r.rate == pytest.approx(1.0, abs=1e-9)
    assert r.to_dict()["status"] == "not verified contractive"


def test_modulus_probe(example3, decimal_uniform):
    assert all(m == 0 for _, m in modulus_probe(decimal_uniform, 3, [1e-3, 1e-1]))
    res = modulus_probe(example3, 0, [0.001, 0.01, 0.1, 1.0])
    ms = [m for _, m in res]
    assert ms == sorted(ms)
    assert ms[1] <= (1 / 6) * 2 * 0.01 + 1e-12


def test_anchor_outside_region():
    with pytest.raises(SystemDefinitionError):
        one_vertex([("x1", "1")], anchor=2.0)


def test_sample_region_inside(gmeasure):
    gen = np.random.default_rng(0)
    for v in range(2):
        X = gmeasure.sample_region(v, 1000, gen)
        assert gmeasure.contains(X, np.full(1000, v)).all()
