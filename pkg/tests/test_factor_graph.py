import numpy as np
import pytest

from gbpse import factor_graph as fg
from gbpse.measurements import make_pseudo_set
from gbpse.reference import jacobian


def test_two_bus_structure(two_bus):
    mset = make_pseudo_set(two_bus)
    g = fg.build(two_bus, mset)
    assert (g.n, g.k) == (2, 5)
    degrees = {mset[f.device].name: g.degree(i) for i, f in enumerate(g.factors)}
    assert degrees == {"T:1": 1, "T:2": 1, "P:1": 2, "P:2": 2, "P:1-2": 2}


def test_ieee14_structure(ieee14):
    g = fg.build(ieee14, make_pseudo_set(ieee14))
    assert (g.n, g.k) == (14, 48)
    assert np.array_equal(g.jacobian(), jacobian(ieee14, make_pseudo_set(ieee14)))
    # every variable sees its own angle factor, injection and incident flows
    for s, var in enumerate(g.variables):
        assert var.factors == sorted(var.factors)


def test_adjacency_arrays_consistent(ieee14):
    g = fg.build(ieee14, make_pseudo_set(ieee14))
    for f in range(g.k):
        lo, hi = g.fac_ptr[f], g.fac_ptr[f + 1]
        assert np.all(g.edge_factor[lo:hi] == f)
        assert list(g.edge_var[lo:hi]) == sorted(g.edge_var[lo:hi])
    for s in range(g.n):
        edges = g.var_edges[g.var_ptr[s]:g.var_ptr[s + 1]]
        assert np.all(g.edge_var[edges] == s)


def test_units(ieee14):
    mset = make_pseudo_set(ieee14, {"T:2": -5.0, "P:1-2": 150.0})
    mset["T:2"].sigma2_rt = mset["T:2"].sigma2_ps = 4.0
    g = fg.build(ieee14, mset)
    f = g.factors[g.device_to_factor[mset.lookup("T:2")]]
    assert f.value_pu == pytest.approx(np.radians(-5.0))
    assert f.variance_pu == pytest.approx(4.0 * (np.pi / 180) ** 2)
    f = g.factors[g.device_to_factor[mset.lookup("P:1-2")]]
    assert f.value_pu == pytest.approx(1.5)


def test_variances_clamped(ieee14):
    mset = make_pseudo_set(ieee14)
    mset["P:2-3"].sigma2_ps = 1e70
    g = fg.build(ieee14, mset)
    # slack 1e-60 deg^2 would be 3e-64 rad^2 unclamped
    assert g.variance.min() == fg.VAR_MIN
    assert g.variance.max() == fg.VAR_MAX


def test_update_keeps_structure(ieee14):
    mset = make_pseudo_set(ieee14)
    g = fg.build(ieee14, mset)
    edges = list(g.edges)
    dev = mset.lookup("T:2")
    fg.update_factor(g, dev, 0.1, 1e-12)
    assert g.edges == edges
    assert g.factors[g.device_to_factor[dev]].variance_pu == 1e-12


def test_update_matches_rebuild(ieee14):
    mset = make_pseudo_set(ieee14)
    g = fg.build(ieee14, mset)
    dev = mset.lookup("P:4-7")
    mset[dev].value_si = 25.0
    mset[dev].sigma2_rt = mset[dev].sigma2_ps = 9.0
    fg.update_factor(g, dev, *fg.to_internal(ieee14, mset[dev], 25.0, 9.0))
    fresh = fg.build(ieee14, mset)
    assert np.array_equal(g.value, fresh.value)
    assert np.array_equal(g.variance, fresh.variance)


def test_update_errors(ieee14):
    g = fg.build(ieee14, make_pseudo_set(ieee14))
    with pytest.raises(KeyError):
        fg.update_factor(g, 999, 0.0, 1.0)
    with pytest.raises(ValueError):
        fg.update_factor(g, 0, 0.0, 0.0)


def test_export_text(two_bus):
    g = fg.build(two_bus, make_pseudo_set(two_bus))
    lines = g.export_text().splitlines()
    assert len(lines) == 8
    assert "f4 -- x1 [C=10.0]" in lines
    assert "f4 -- x2 [C=-10.0]" in lines
