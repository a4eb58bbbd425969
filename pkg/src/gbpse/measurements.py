"""Measurement devices, variance aging and arrival schedules.

Every possible measurement of the network exists as a device at all times.
A device is *real-time* while its variance is still ramping up from the
value it arrived with, and *pseudo* otherwise.

Device values are stored in SI-like units (MW for power, degrees for
angles); conversion to per-unit/radians happens when factors are built.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .network import measurement_coefficients

PSEUDO_VARIANCE = 1e60
SLACK_VARIANCE = 1e-60
KINDS = ("angle", "injection", "flow")

REAL_TIME = "real_time"
PSEUDO = "pseudo"


@dataclass
class MeasurementDevice:
    id: int
    kind: str
    location: int
    name: str
    value_si: float = 0.0
    pseudo_value_si: float = 0.0
    sigma2_rt: float = PSEUDO_VARIANCE
    sigma2_ps: float = PSEUDO_VARIANCE
    t_rt: float | None = None
    t_ps: float = math.inf


@dataclass(frozen=True)
class ArrivalEvent:
    device: int
    time: float
    value_si: float | None
    sigma2_rt: float
    t_ps: float = math.inf

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"arrival time {self.time} is negative")
        if not self.sigma2_rt > 0:
            raise ValueError(f"arrival variance must be positive, got {self.sigma2_rt}")


@dataclass
class MeasurementSet:
    devices: list[MeasurementDevice]
    by_name: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.by_name = {d.name: d.id for d in self.devices}

    def __len__(self):
        return len(self.devices)

    def __iter__(self):
        return iter(self.devices)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.devices[self.by_name[key]]
        return self.devices[key]

    def lookup(self, name):
        """Device id for a name such as ``P:1-2``; raises KeyError."""
        try:
            return self.by_name[name]
        except KeyError:
            raise KeyError(f"unknown device {name!r}") from None

    def variances(self, t):
        return np.array([variance_at(d, t) for d in self.devices])

    def values(self):
        return np.array([d.value_si for d in self.devices])


def device_name(net, kind, location):
    if kind == "angle":
        return f"T:{location}"
    if kind == "injection":
        return f"P:{location}"
    br = net.branches[location]
    # parallel branches get #2, #3, ... in case order
    dup = sum(1 for b in net.branches[:location]
              if (b.from_bus, b.to_bus) == (br.from_bus, br.to_bus))
    suffix = f"#{dup + 1}" if dup else ""
    return f"P:{br.from_bus}-{br.to_bus}{suffix}"


_NAME_RE = re.compile(r"^(T|P):(\d+)(?:-(\d+)(?:#(\d+))?)?$")


def parse_device_name(net, name):
    """Map a device name to ``(kind, location)``; raises KeyError."""
    m = _NAME_RE.match(name.strip())
    if not m:
        raise KeyError(f"unknown device {name!r}")
    letter, a, b, k = m.groups()
    a = int(a)
    if b is None:
        if a not in net.index:
            raise KeyError(f"unknown device {name!r}")
        return ("angle" if letter == "T" else "injection"), a
    if letter != "P":
        raise KeyError(f"unknown device {name!r}")
    b, k = int(b), int(k or 1)
    count = 0
    for idx, br in enumerate(net.branches):
        if (br.from_bus, br.to_bus) == (a, b):
            count += 1
            if count == k:
                return "flow", idx
    raise KeyError(f"unknown device {name!r}")


def make_pseudo_set(net, priors=None, *, sigma2_ps=PSEUDO_VARIANCE,
                    anchor_slack=True, kinds=KINDS):
    """Full pseudo-measurement set for ``net``.

    Devices are ordered angles (by bus), injections (by bus), flows (by
    branch), one flow per branch in from->to direction. ``priors`` maps
    device names or ids to prior values; missing priors are 0. With
    ``anchor_slack`` the slack angle device is pinned at 0 deg with variance
    ``SLACK_VARIANCE``. ``kinds`` restricts the device classes, e.g. to get
    an acyclic factor graph from angle and flow devices only.
    """
    if "angle" not in kinds:
        raise ValueError("angle devices are required for every bus")
    devices = []
    for kind in KINDS:
        if kind not in kinds:
            continue
        locs = range(len(net.branches)) if kind == "flow" else net.bus_ids
        for loc in locs:
            name = device_name(net, kind, loc)
            devices.append(MeasurementDevice(len(devices), kind, loc, name))
    mset = MeasurementSet(devices)

    for key, value in (priors or {}).items():
        dev = mset[mset.lookup(key)] if isinstance(key, str) else _by_id(mset, key)
        dev.value_si = dev.pseudo_value_si = float(value)
    for dev in mset:
        dev.sigma2_rt = dev.sigma2_ps = sigma2_ps
    if anchor_slack:
        dev = mset[mset.lookup(f"T:{net.slack}")]
        dev.value_si = dev.pseudo_value_si = 0.0
        dev.sigma2_rt = dev.sigma2_ps = SLACK_VARIANCE
    return mset


def _by_id(mset, key):
    if not (isinstance(key, (int, np.integer)) and 0 <= key < len(mset)):
        raise KeyError(f"unknown device {key!r}")
    return mset[int(key)]


def variance_at(dev, t):
    """Variance of ``dev`` at time ``t`` under linear aging.

    Equals ``sigma2_ps`` before the latest arrival and once aging completes,
    ``sigma2_rt`` at the arrival instant, and the straight line between the
    two points in between.
    """
    if dev.t_rt is None or t < dev.t_rt or t >= dev.t_ps:
        return dev.sigma2_ps
    if math.isinf(dev.t_ps):
        return dev.sigma2_rt
    frac = (t - dev.t_rt) / (dev.t_ps - dev.t_rt)
    return dev.sigma2_rt + (dev.sigma2_ps - dev.sigma2_rt) * frac


def classify(dev, t):
    if dev.t_rt is not None and dev.t_rt <= t < dev.t_ps:
        return REAL_TIME
    return PSEUDO


def apply_arrival(mset, ev):
    """Overwrite a device's value and aging state with an arrival."""
    dev = _by_id(mset, ev.device)
    if not ev.sigma2_rt > 0:
        raise ValueError(f"arrival variance must be positive, got {ev.sigma2_rt}")
    if ev.value_si is None:
        raise ValueError("arrival has no value")
    if ev.t_ps <= ev.time:
        raise ValueError(f"t_ps={ev.t_ps} must be later than arrival time {ev.time}")
    dev.value_si = float(ev.value_si)
    dev.sigma2_rt = float(ev.sigma2_rt)
    dev.t_rt = float(ev.time)
    dev.t_ps = float(ev.t_ps)


def sample_poisson_schedule(rate_lambda, t_start, t_end, seed):
    """Arrival times of a homogeneous Poisson process on ``[t_start, t_end)``.

    ``seed`` may be anything accepted by :func:`numpy.random.default_rng`.
    """
    if not rate_lambda > 0:
        raise ValueError(f"rate must be positive, got {rate_lambda}")
    if not t_start < t_end:
        raise ValueError(f"empty interval [{t_start}, {t_end})")
    rng = np.random.default_rng(seed)
    times = []
    t = t_start
    # draw in blocks; expected count is rate * duration
    block = max(16, int(2 * rate_lambda * (t_end - t_start)) + 16)
    while True:
        gaps = rng.exponential(1.0 / rate_lambda, size=block)
        for g in gaps:
            t += g
            if t >= t_end:
                return times
            times.append(t)


def device_coefficients(net, dev):
    return measurement_coefficients(net, dev.kind, dev.location)
