import numpy as np
import pytest

from gbpse.measurements import make_pseudo_set
from gbpse.reference import (
    add_measurement_noise, dc_power_flow, exact_measurements, jacobian, objective,
    wls_solve,
)
from gbpse.scenarios import NOMINAL_INJECTIONS_MW, operating_point


def test_two_bus_power_flow(two_bus):
    theta = dc_power_flow(two_bus, {2: -0.5})
    # P2 = -b (theta2 - theta1) with b = -10: load of 0.5 pu gives -0.05 rad
    assert theta[1] == pytest.approx(-0.05, rel=1e-15)
    assert theta[0] == 0.0


def test_zero_injections(ieee14):
    assert np.all(dc_power_flow(ieee14, {}) == 0.0)


def test_ieee14_reference_angles(ieee14):
    deg = np.degrees(operating_point(ieee14, NOMINAL_INJECTIONS_MW))
    for bus, ref in [(3, -12.9537), (8, -13.9071), (14, -17.1883)]:
        assert deg[ieee14.index[bus]] == pytest.approx(ref, abs=0.3)
        assert deg[ieee14.index[bus]] == pytest.approx(ref, abs=1e-4)


def test_power_flow_balances_injections(ieee14):
    theta = operating_point(ieee14, NOMINAL_INJECTIONS_MW)
    mset = make_pseudo_set(ieee14, kinds=("angle", "injection"))
    inj = exact_measurements(ieee14, mset, theta)[14:]
    for bus in ieee14.bus_ids[1:]:
        assert inj[ieee14.index[bus]] == pytest.approx(NOMINAL_INJECTIONS_MW[bus], abs=1e-9)
    # the slack absorbs the total mismatch
    assert inj.sum() == pytest.approx(0.0, abs=1e-9)


def _exact_tree_set(net, theta):
    mset = make_pseudo_set(net, kinds=("angle", "flow"))
    values = exact_measurements(net, mset, theta)
    for d, v in zip(mset, values):
        d.value_si = v
        d.sigma2_rt = d.sigma2_ps = 1.0
    return mset


def test_wls_exactly_determined(ieee14):
    theta = operating_point(ieee14, NOMINAL_INJECTIONS_MW)
    mset = _exact_tree_set(ieee14, theta)
    # slack angle plus a spanning tree of flows (the Table I branches)
    tree = {(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (4, 7), (7, 8), (7, 9), (9, 10),
            (10, 11), (6, 12), (12, 13), (13, 14)}
    keep = [mset.lookup("T:1")] + [mset.lookup(f"P:{i}-{j}") for i, j in tree]
    res = wls_solve(ieee14, mset, devices=keep)
    assert res.success
    assert np.allclose(res.angles, theta, rtol=0, atol=1e-12)


def test_wls_optimal_over_truth(ieee14):
    rng = np.random.default_rng(0)
    theta = operating_point(ieee14, NOMINAL_INJECTIONS_MW)
    mset = make_pseudo_set(ieee14)
    noisy = add_measurement_noise(exact_measurements(ieee14, mset, theta), np.ones(48), 1)
    for d, v in zip(mset, noisy):
        d.value_si = v
    # variance 1 pu^2 expressed in device units
    for d in mset:
        d.sigma2_rt = d.sigma2_ps = (180 / np.pi) ** 2 if d.kind == "angle" else 1e4
    res = wls_solve(ieee14, mset)
    assert res.success and np.all(np.isfinite(res.angles))
    assert objective(ieee14, mset, 0.0, res.angles) <= objective(ieee14, mset, 0.0, theta)
    base = objective(ieee14, mset, 0.0, res.angles)
    for s in range(ieee14.n):
        for step in (1e-3, -1e-3):
            x = res.angles.copy()
            x[s] += step
            assert objective(ieee14, mset, 0.0, x) > base
    # gradient of the objective vanishes at the estimate
    H = jacobian(ieee14, mset)
    scale = np.array([np.pi / 180 if d.kind == "angle" else 0.01 for d in mset])
    z = np.array([d.value_si for d in mset]) * scale
    w = 1.0 / (np.array([d.sigma2_ps for d in mset]) * scale**2)
    grad = H.T @ (w * (z - H @ res.angles))
    assert np.max(np.abs(grad)) < 1e-9 * np.max(np.abs(H.T @ (w * z)))


def test_wls_ill_conditioned(ieee14):
    res = wls_solve(ieee14, make_pseudo_set(ieee14))
    assert not res.success
    assert res.cond > 1e16
    assert res.angles is None


def test_objective_units(two_bus):
    mset = make_pseudo_set(two_bus, kinds=("angle",), anchor_slack=False)
    for d in mset:
        d.sigma2_rt = d.sigma2_ps = 1.0
    mset["T:1"].value_si = 1.0
    assert objective(two_bus, mset, 0.0, np.zeros(2)) == pytest.approx(1.0)


def test_objective_zero_at_truth(ieee14):
    theta = operating_point(ieee14, NOMINAL_INJECTIONS_MW)
    mset = _exact_tree_set(ieee14, theta)
    assert objective(ieee14, mset, 0.0, theta) == pytest.approx(0.0, abs=1e-18)


def test_noise():
    assert add_measurement_noise([3.0], [0.0], 1)[0] == pytest.approx(3.0, abs=1e-20)
    a = add_measurement_noise(np.zeros(5), np.ones(5), [4, 1, 2])
    assert np.array_equal(a, add_measurement_noise(np.zeros(5), np.ones(5), [4, 1, 2]))
    draws = add_measurement_noise(np.zeros(100_000), np.full(100_000, 2.5), 9)
    assert draws.var() == pytest.approx(2.5, rel=0.05)
    assert abs(draws.mean()) < 4 * np.sqrt(2.5 / 100_000)
