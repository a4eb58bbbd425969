import math

import numpy as np
import pytest

from gbpse.measurements import (
    PSEUDO, REAL_TIME, ArrivalEvent, MeasurementDevice, apply_arrival, classify,
    device_name, make_pseudo_set, parse_device_name, sample_poisson_schedule, variance_at,
)


def _dev(**kw):
    return MeasurementDevice(0, "flow", 0, "P:1-2", **kw)


def test_two_bus_pseudo_set(two_bus):
    mset = make_pseudo_set(two_bus, anchor_slack=False)
    assert [d.name for d in mset] == ["T:1", "T:2", "P:1", "P:2", "P:1-2"]
    assert all(d.value_si == 0.0 and d.sigma2_ps == 1e60 for d in mset)
    assert all(classify(d, 0.0) == PSEUDO for d in mset)


def test_ieee14_device_count(ieee14):
    mset = make_pseudo_set(ieee14)
    kinds = [d.kind for d in mset]
    assert (kinds.count("angle"), kinds.count("injection"), kinds.count("flow")) == (14, 14, 20)


def test_slack_anchor(ieee14):
    mset = make_pseudo_set(ieee14)
    slack = mset["T:1"]
    assert slack.value_si == 0.0
    assert variance_at(slack, 0.0) == 1e-60
    assert all(variance_at(d, 0.0) == 1e60 for d in mset if d.name != "T:1")


def test_priors_by_name_and_id(two_bus):
    mset = make_pseudo_set(two_bus, {"P:1-2": 3.0, 1: -2.0})
    assert mset["P:1-2"].value_si == 3.0
    assert mset[1].value_si == -2.0
    with pytest.raises(KeyError):
        make_pseudo_set(two_bus, {"P:2-1": 1.0})


def test_device_names_round_trip(ieee14):
    for d in make_pseudo_set(ieee14):
        assert device_name(ieee14, d.kind, d.location) == d.name
        assert parse_device_name(ieee14, d.name) == (d.kind, d.location)
    with pytest.raises(KeyError):
        parse_device_name(ieee14, "Q:3")


def test_variance_linear_midpoint():
    d = _dev(sigma2_rt=4.0, sigma2_ps=100.0, t_rt=1.0, t_ps=2.0)
    assert variance_at(d, 1.5) == 52.0
    assert variance_at(d, 1.0) == 4.0
    assert variance_at(d, 0.5) == 100.0
    assert variance_at(d, 2.0) == 100.0


def test_variance_without_aging():
    d = _dev(sigma2_rt=1e-12, t_rt=1.0)
    assert variance_at(d, 1e6) == 1e-12


def test_classify():
    d = _dev(sigma2_rt=1.0, t_rt=1.0, t_ps=3.0)
    assert classify(d, 1.0) == REAL_TIME
    assert classify(d, 3.0) == PSEUDO
    assert classify(d, 0.9) == PSEUDO
    assert classify(_dev(), 5.0) == PSEUDO


def test_apply_arrival(ieee14):
    mset = make_pseudo_set(ieee14)
    dev = mset.lookup("P:1-2")
    apply_arrival(mset, ArrivalEvent(dev, 1.0, 150.0, 1e-12))
    assert classify(mset[dev], 1.0) == REAL_TIME
    assert variance_at(mset[dev], 1.0) == 1e-12
    apply_arrival(mset, ArrivalEvent(dev, 2.0, 140.0, 4.0, 10.0))
    assert mset[dev].value_si == 140.0
    assert variance_at(mset[dev], 2.0) == 4.0


def test_arrival_validation(ieee14):
    mset = make_pseudo_set(ieee14)
    with pytest.raises(ValueError):
        ArrivalEvent(0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ArrivalEvent(0, -1.0, 1.0, 1.0)
    with pytest.raises(KeyError):
        apply_arrival(mset, ArrivalEvent(999, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        apply_arrival(mset, ArrivalEvent(0, 1.0, 1.0, 1.0, t_ps=1.0))


def test_poisson_deterministic():
    a = sample_poisson_schedule(0.5, 250.0, 300.0, 7)
    assert a == sample_poisson_schedule(0.5, 250.0, 300.0, 7)
    assert all(250.0 <= t < 300.0 for t in a)
    assert a == sorted(a)


@pytest.mark.parametrize("rate, window", [(0.05, 250.0), (0.5, 50.0)])
def test_poisson_mean_count(rate, window):
    seeds = 10_000
    counts = np.array([len(sample_poisson_schedule(rate, 0.0, window, s)) for s in range(seeds)])
    expected = rate * window
    # counts are Poisson(expected): the sample mean has sd sqrt(expected / seeds)
    assert abs(counts.mean() - expected) < 3 * math.sqrt(expected / seeds)
    assert counts.var() == pytest.approx(expected, rel=0.1)


def test_poisson_gaps_exponential():
    from scipy import stats

    times = sample_poisson_schedule(2.0, 0.0, 5000.0, 3)
    gaps = np.diff([0.0] + times)
    assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 1e-3
