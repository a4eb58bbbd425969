"""Event-driven streaming simulation of the BP state estimator.

Simulated time advances in sweep ticks ``k * sweep_interval`` (k = 1, 2, ...).
At each tick the simulator applies every truth change and arrival due by
then, refreshes aged variances if a refresh is due, runs one BP sweep and
records a snapshot on the configured cadence. The factor graph and its
messages persist for the whole run.

Scenario files extend the measurement sections with a few header keys::

    horizon=14
    sweep_interval=1e-4
    snapshot_interval=1e-2
    aging_refresh=1e-4
    damping=0.9
    seed=7
    [pseudo]
    T:2 -2.5
    [truth]
    0 2 18.3                     # time bus injection_mw
    [arrivals]
    1 P:1-2 * 1e-12 inf          # time device value sigma2_rt t_ps
    [poisson]
    power 0.05 0 250 100 1000 11 # class lambda t_start t_end sigma2_rt aging seed

An arrival value of ``*`` is drawn as truth + N(0, sigma2_rt) when the
arrival is applied. In ``[poisson]`` lines the sixth column is the aging
duration ``t_ps - t_rt`` (``inf`` for no aging); ``class`` is ``flow``,
``injection``, ``power`` (both), ``angle`` or a single device name.
"""
from __future__ import annotations

import heapq
import io
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import factor_graph as fg
from . import gbp
from .measurements import (
    ArrivalEvent, apply_arrival, make_pseudo_set, sample_poisson_schedule,
)
from .reference import add_measurement_noise, dc_power_flow, exact_measurements

RAD2DEG = 180.0 / math.pi

TRUTH_CHANGE = 0
ARRIVAL = 1


class ScenarioFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PoissonSpec:
    device_class: str
    rate: float
    t_start: float
    t_end: float
    sigma2_rt: float
    aging: float
    seed: int


@dataclass
class Scenario:
    network: object
    priors: dict = field(default_factory=dict)
    scripted: list = field(default_factory=list)
    poisson: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    horizon: float = 1.0
    sweep_interval: float = 1e-4
    aging_refresh: float | None = None
    snapshot_interval: float = 1e-2
    damping: float = 1.0
    seed: int = 0
    arrivals: list = field(default_factory=list)

    def __post_init__(self):
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        if not self.sweep_interval > 0:
            raise ValueError("sweep_interval must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.arrivals:
            self.arrivals = expand_arrivals(self)

    def with_options(self, **changes):
        """Copy with overridden settings; Poisson arrivals are re-drawn."""
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, arrivals=[], **changes)


def poisson_devices(mset, net, device_class):
    if device_class in ("flow", "injection", "angle"):
        kinds = (device_class,)
    elif device_class == "power":
        kinds = ("flow", "injection")
    else:
        return [mset.lookup(device_class)]
    slack = f"T:{net.slack}"
    return [d.id for d in mset if d.kind in kinds and d.name != slack]


def expand_arrivals(sc):
    """Scripted plus Poisson-drawn arrivals, in event-queue order."""
    mset = make_pseudo_set(sc.network)
    events = list(sc.scripted)
    for spec in sc.poisson:
        for dev in poisson_devices(mset, sc.network, spec.device_class):
            times = sample_poisson_schedule(
                spec.rate, spec.t_start, spec.t_end, [sc.seed, 2, spec.seed, dev])
            # draws past the horizon could never be applied
            events += [ArrivalEvent(dev, t, None, spec.sigma2_rt, t + spec.aging)
                       for t in times if t < sc.horizon]
    for ev in sc.scripted:
        if ev.time >= sc.horizon and not (ev.time == 0 and sc.horizon == 0):
            raise ValueError(f"event at t={ev.time} beyond horizon {sc.horizon}")
    events.sort(key=lambda ev: (ev.time, ev.device))
    return events


def _number(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise ScenarioFormatError(f"bad number {tok!r}", lineno) from None


_HEADER = {
    "horizon": float, "sweep_interval": float, "aging_refresh": float,
    "snapshot_interval": float, "damping": float, "seed": int,
}


def load_scenario(text, net):
    """Parse scenario text against ``net``."""
    mset = make_pseudo_set(net)
    opts = {}
    priors, scripted, poisson, truth = {}, [], [], {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("pseudo", "arrivals", "poisson", "truth"):
                raise ScenarioFormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None and "=" in line:
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in _HEADER:
                raise ScenarioFormatError(f"unknown header key {key!r}", lineno)
            try:
                opts[key] = _HEADER[key](value)
            except ValueError:
                raise ScenarioFormatError(f"bad value for {key}: {value!r}", lineno) from None
            continue
        tok = line.split()
        try:
            if section == "pseudo":
                if len(tok) != 2:
                    raise ScenarioFormatError("expected 'device value'", lineno)
                priors[_device(mset, tok[0], lineno)] = _number(tok[1], lineno)
            elif section == "arrivals":
                if len(tok) != 5:
                    raise ScenarioFormatError(
                        "expected 'time device value sigma2_rt t_ps'", lineno)
                value = None if tok[2] == "*" else _number(tok[2], lineno)
                scripted.append(ArrivalEvent(
                    mset.lookup(_device(mset, tok[1], lineno)), _number(tok[0], lineno),
                    value, _number(tok[3], lineno), _number(tok[4], lineno)))
            elif section == "poisson":
                if len(tok) != 7:
                    raise ScenarioFormatError(
                        "expected 'class lambda t_start t_end sigma2_rt aging seed'", lineno)
                cls = tok[0]
                if cls not in ("flow", "injection", "power", "angle"):
                    cls = _device(mset, cls, lineno)
                rate, t0, t1, var, aging = (_number(x, lineno) for x in tok[1:6])
                if not rate > 0 or not t0 < t1 or not var > 0 or not aging > 0:
                    raise ScenarioFormatError("invalid Poisson parameters", lineno)
                poisson.append(PoissonSpec(cls, rate, t0, t1, var, aging, int(tok[6])))
            elif section == "truth":
                if len(tok) != 3:
                    raise ScenarioFormatError("expected 'time bus injection_mw'", lineno)
                t, bus = _number(tok[0], lineno), int(tok[1])
                if bus not in net.index:
                    raise ScenarioFormatError(f"unknown bus {bus}", lineno)
                truth.setdefault(t, {})[bus] = _number(tok[2], lineno)
            else:
                raise ScenarioFormatError("data line outside of a section", lineno)
        except ValueError as exc:
            if isinstance(exc, ScenarioFormatError):
                raise
            raise ScenarioFormatError(str(exc), lineno) from None
    try:
        sc = Scenario(net, priors=priors, scripted=scripted, poisson=poisson,
                      truth=sorted(truth.items()), **opts)
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from None
    for t, _ in sc.truth:
        if t < 0 or (t >= sc.horizon and t > 0):
            raise ScenarioFormatError(f"truth change at t={t} beyond horizon {sc.horizon}")
    return sc


def _device(mset, name, lineno):
    if name not in mset.by_name:
        raise ScenarioFormatError(f"unknown device {name!r}", lineno)
    return name


def render_scenario(sc):
    """Scenario text that loads back to an equivalent :class:`Scenario`."""
    def num(x):
        return repr(float(x))

    out = [f"horizon={num(sc.horizon)}", f"sweep_interval={num(sc.sweep_interval)}",
           f"snapshot_interval={num(sc.snapshot_interval)}"]
    if sc.aging_refresh is not None:
        out.append(f"aging_refresh={num(sc.aging_refresh)}")
    out += [f"damping={num(sc.damping)}", f"seed={int(sc.seed)}"]
    mset = make_pseudo_set(sc.network)
    if sc.priors:
        out.append("[pseudo]")
        out += [f"{k if isinstance(k, str) else mset[k].name} {num(v)}"
                for k, v in sc.priors.items()]
    if sc.truth:
        out.append("[truth]")
        for t, prof in sc.truth:
            out += [f"{num(t)} {bus} {num(mw)}" for bus, mw in prof.items()]
    if sc.scripted:
        out.append("[arrivals]")
        for ev in sc.scripted:
            value = "*" if ev.value_si is None else num(ev.value_si)
            out.append(f"{num(ev.time)} {mset[ev.device].name} {value} "
                       f"{num(ev.sigma2_rt)} {num(ev.t_ps)}")
    if sc.poisson:
        out.append("[poisson]")
        for p in sc.poisson:
            out.append(f"{p.device_class} {num(p.rate)} {num(p.t_start)} {num(p.t_end)} "
                       f"{num(p.sigma2_rt)} {num(p.aging)} {int(p.seed)}")
    return "\n".join(out) + "\n"


@dataclass
class EstimateSnapshot:
    time: float
    sweeps: int
    theta_deg: np.ndarray
    var_deg2: np.ndarray


class EventQueue:
    """Time-ordered heap; ties go truth changes first, then by device id."""

    def __init__(self):
        self._heap = []
        self._seq = 0

    def push(self, time, kind, device, payload):
        heapq.heappush(self._heap, (time, kind, device, self._seq, payload))
        self._seq += 1

    def peek_time(self):
        return self._heap[0][0] if self._heap else math.inf

    def pop(self):
        time, kind, device, _, payload = heapq.heappop(self._heap)
        return time, kind, device, payload

    def __len__(self):
        return len(self._heap)


def _tick_of(time, dt):
    return max(0, math.ceil(time / dt - 1e-9))


class Replay:
    """Measurement set and truth state as scenario events are applied."""

    def __init__(self, sc):
        self.sc = sc
        self.net = sc.network
        self.dt = sc.sweep_interval
        self.mset = make_pseudo_set(self.net, sc.priors)
        self.injections = {b: 0.0 for b in self.net.bus_ids}
        self.truth_theta = np.zeros(self.net.n)
        self.queue = EventQueue()
        for t, prof in sc.truth:
            self.queue.push(t, TRUTH_CHANGE, -1, prof)
        for ordinal, ev in enumerate(sc.arrivals):
            self.queue.push(ev.time, ARRIVAL, ev.device, (ordinal, ev))

    def next_tick(self):
        return _tick_of(self.queue.peek_time(), self.dt) if self.queue else math.inf

    def apply_due(self, k):
        """Apply queued events whose tick is <= k; returns touched device ids."""
        applied = []
        while self.queue and self.next_tick() <= k:
            _, kind, _, payload = self.queue.pop()
            if kind == TRUTH_CHANGE:
                self.injections.update(payload)
                base = self.net.base_mva
                self.truth_theta = dc_power_flow(
                    self.net, {b: p / base for b, p in self.injections.items()})
            else:
                ordinal, ev = payload
                if ev.value_si is None:
                    ev = replace(ev, value_si=self.sample_value(ev, ordinal))
                apply_arrival(self.mset, ev)
                applied.append(ev.device)
        return applied

    def sample_value(self, ev, ordinal):
        dev = self.mset[ev.device]
        exact = exact_measurements(self.net, [dev], self.truth_theta)[0]
        noisy = add_measurement_noise([exact], [ev.sigma2_rt], [self.sc.seed, 1, ordinal])
        return float(noisy[0])


class Simulation:
    """A running estimator instance driven by a :class:`Scenario`."""

    def __init__(self, sc, threads=1):
        self.sc = sc
        self.net = sc.network
        self.threads = threads
        self.dt = sc.sweep_interval
        refresh = sc.aging_refresh if sc.aging_refresh is not None else self.dt
        self.refresh_every = max(1, round(refresh / self.dt))
        self.snap_every = max(1, round(sc.snapshot_interval / self.dt))

        self.replay = Replay(sc)
        self.mset = self.replay.mset
        self._scale = np.array([fg.unit_scale(self.net, d.kind) for d in self.mset])

        self.aging = AgingTable(self.mset)
        self.tick = 0
        self.time = 0.0
        self.sweeps = 0
        self.aging.update(self.mset, self.replay.apply_due(0))
        self.graph = fg.build(self.net, self.mset, 0.0)
        self.state = gbp.init_messages(self.graph)
        self._aging = self._aging_active(0.0)
        self._still = False
        self.current = gbp.marginals(self.graph, self.state)
        self.snapshots = [self._snapshot(0.0)]

    @property
    def truth_theta(self):
        return self.replay.truth_theta

    def _aging_active(self, t):
        return self.aging.active(t)

    def _refresh(self, t):
        """Push device values and aged variances into the factor graph."""
        vals = self.aging.value * self._scale
        var = np.clip(self.aging.variances(t) * self._scale**2, fg.VAR_MIN, fg.VAR_MAX)
        g = self.graph
        diff = np.nonzero((vals != g.value) | (var != g.variance))[0]
        if len(diff):
            fg.update_factors(g, diff, vals[diff], var[diff])
        return len(diff) > 0

    def _snapshot(self, t):
        m = self.current
        return EstimateSnapshot(t, self.sweeps, m.mean * RAD2DEG, m.variance * RAD2DEG**2)

    def _one_tick(self):
        k = self.tick + 1
        t = k * self.dt
        touched = self.replay.apply_due(k)
        self.aging.update(self.mset, touched)
        changed = bool(touched)
        if changed or (self._aging and k % self.refresh_every == 0):
            changed = self._refresh(t) or changed
            self._aging = self._aging_active(t)
        moved = gbp.sweep(self.graph, self.state, self.sc.damping, self.threads)
        self.sweeps += 1
        self.tick = k
        if moved or changed:
            self.current = gbp.marginals(self.graph, self.state)
        self._still = not moved and not changed and not self._aging
        if k % self.snap_every == 0:
            self.snapshots.append(self._snapshot(t))

    def step(self, until):
        """Advance through every tick at or before ``until`` (seconds)."""
        if until < self.time:
            raise ValueError("cannot step backwards")
        last = math.floor(until / self.dt + 1e-9)
        while self.tick < last:
            if self._still:
                # bitwise fixed point with frozen parameters: later sweeps are identical
                nxt = min(last, self.replay.next_tick() - 1)
                if nxt > self.tick:
                    self._skip_to(nxt)
                    continue
            self._one_tick()
        self.time = until

    def _skip_to(self, k):
        first = (self.tick // self.snap_every + 1) * self.snap_every
        for j in range(first, k + 1, self.snap_every):
            self.sweeps += j - self.tick
            self.state.iteration += j - self.tick
            self.tick = j
            self.snapshots.append(self._snapshot(j * self.dt))
        self.sweeps += k - self.tick
        self.state.iteration += k - self.tick
        self.tick = k

    def run(self):
        self.step(self.sc.horizon)
        return self.snapshots


class AgingTable:
    """Array mirror of the devices' aging state, for vectorised refreshes."""

    def __init__(self, mset):
        k = len(mset)
        self.value = np.zeros(k)
        self.t_rt = np.full(k, np.nan)
        self.t_ps = np.full(k, np.inf)
        self.s_rt = np.zeros(k)
        self.s_ps = np.zeros(k)
        self.update(mset, range(k))

    def update(self, mset, ids):
        for i in ids:
            if i < 0:
                continue
            d = mset[i]
            self.value[i] = d.value_si
            self.t_rt[i] = np.nan if d.t_rt is None else d.t_rt
            self.t_ps[i] = d.t_ps
            self.s_rt[i] = d.sigma2_rt
            self.s_ps[i] = d.sigma2_ps

    def _live(self, t):
        with np.errstate(invalid="ignore"):
            return (self.t_rt <= t) & (t < self.t_ps)

    def variances(self, t):
        """Same arithmetic as ``measurements.variance_at``, for all devices."""
        live = self._live(t)
        ramp = live & np.isfinite(self.t_ps)
        out = np.where(live, self.s_rt, self.s_ps)
        if ramp.any():
            frac = (t - self.t_rt[ramp]) / (self.t_ps[ramp] - self.t_rt[ramp])
            out[ramp] = self.s_rt[ramp] + (self.s_ps[ramp] - self.s_rt[ramp]) * frac
        return out

    def active(self, t):
        return bool(np.any(self._live(t) & np.isfinite(self.t_ps) & (self.s_rt != self.s_ps)))


def variances_at(mset, t):
    """Variance of every device in ``mset`` at time ``t``."""
    return AgingTable(mset).variances(t)


def run(sc, threads=1):
    return Simulation(sc, threads).run()


def configuration_at(sc, t):
    """Measurement set and truth angles once every event due by ``t`` is applied."""
    replay = Replay(sc)
    replay.apply_due(_tick_of(t, replay.dt))
    return replay.mset, replay.truth_theta


def convergence_probe(sc, watch, max_sweeps=100_000, tol=1e-9, threads=1):
    """Per-sweep marginal means (deg) of ``watch`` buses after the single arrival.

    The first entry (sweep 0) is the state just before the arrival is
    applied; tracing stops once no marginal mean moves by ``tol`` rad.
    """
    if len(sc.arrivals) != 1:
        raise ValueError(f"probe needs exactly one arrival, scenario has {len(sc.arrivals)}")
    if not watch:
        return []
    net = sc.network
    cols = [net.index[b] for b in watch]
    sim = Simulation(replace(sc, snapshot_interval=sc.horizon or sc.sweep_interval),
                     threads)
    k_arr = _tick_of(sc.arrivals[0].time, sim.dt)
    sim.step((k_arr - 1) * sim.dt)
    prev = sim.current.mean.copy()
    trace = [(0, prev[cols] * RAD2DEG)]
    for n in range(1, max_sweeps + 1):
        sim._one_tick()
        cur = sim.current.mean
        trace.append((n, cur[cols] * RAD2DEG))
        if np.max(np.abs(cur - prev)) < tol:
            break
        prev = cur.copy()
    return trace


def settle_index(trace, col, band):
    """First sweep index after which the trace stays within ``band`` of its end."""
    final = trace[-1][1][col]
    idx = 0
    for n, means in trace:
        if abs(means[col] - final) > band:
            idx = n + 1
    return idx


def write_csv(snapshots, bus_ids, fh):
    fh.write(",".join(["time_s", "sweeps"] + [f"theta_{b}_deg" for b in bus_ids]
                      + [f"var_{b}_deg2" for b in bus_ids]) + "\n")
    for s in snapshots:
        row = [repr(float(s.time)), str(s.sweeps)]
        row += [repr(float(x)) for x in s.theta_deg]
        row += [repr(float(x)) for x in s.var_deg2]
        fh.write(",".join(row) + "\n")


def csv_text(snapshots, bus_ids):
    buf = io.StringIO()
    write_csv(snapshots, bus_ids, buf)
    return buf.getvalue()


def write_plotdata(snapshots, bus_ids, directory):
    """One ``theta_<bus>.dat`` file per bus: time (s) and angle (deg)."""
    os.makedirs(directory, exist_ok=True)
    for s_idx, bus in enumerate(bus_ids):
        with open(os.path.join(directory, f"theta_{bus}.dat"), "w", encoding="utf-8") as fh:
            fh.write("time theta_deg\n")
            for s in snapshots:
                fh.write(f"{float(s.time)!r} {float(s.theta_deg[s_idx])!r}\n")
