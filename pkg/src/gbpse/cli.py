"""Command-line entry point: ``gbpse {run,solve,probe,export-graph}``.

Flags override the corresponding scenario header values.
"""
from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, replace

from . import factor_graph as fg
from . import gbp
from .network import CaseFormatError, load_case
from .reference import wls_solve
from .simulator import (
    RAD2DEG, Simulation, configuration_at, convergence_probe,
    load_scenario, write_csv, write_plotdata,
)


@dataclass
class RunConfig:
    case: str
    scenario: str
    out: str | None = None
    eps: float = 1e-9
    max_sweeps: int = 100_000
    sweep_interval: float | None = None
    damping: float | None = None
    seed: int | None = None
    threads: int = 1
    at: float = 0.0
    watch: list | None = None
    emit_plotdata: str | None = None
    variances: list | None = None

    def __post_init__(self):
        if not self.case or not self.scenario:
            raise ValueError("case and scenario paths are required")
        if not self.eps > 0:
            raise ValueError("--eps must be positive")
        if self.damping is not None and not 0 < self.damping <= 1:
            raise ValueError("--damping must lie in (0, 1]")


class UsageError(Exception):
    pass


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load(cfg):
    try:
        net = load_case(cfg.case) if os.path.exists(cfg.case) else None
    except CaseFormatError as exc:
        raise UsageError(f"{cfg.case}: {exc}") from None
    if net is None:
        raise UsageError(f"cannot read {cfg.case}: no such file")
    text = _read(cfg.scenario)
    try:
        sc = load_scenario(text, net)
        sc = sc.with_options(sweep_interval=cfg.sweep_interval, damping=cfg.damping,
                             seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(f"{cfg.scenario}: {exc}") from None
    return net, sc


def _atomic_write(path, writer):
    """Write via a temp file so that ``path`` only ever appears complete."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gbpse-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def cmd_run(cfg):
    net, sc = _load(cfg)
    if not cfg.out:
        raise UsageError("run needs --out")
    snaps = Simulation(sc, threads=cfg.threads).run()
    _atomic_write(cfg.out, lambda fh: write_csv(snaps, net.bus_ids, fh))
    if cfg.emit_plotdata:
        write_plotdata(snaps, net.bus_ids, cfg.emit_plotdata)
    print(f"wrote {len(snaps)} snapshots to {cfg.out}")
    return 0


def solve_static(net, sc, at, eps, max_sweeps, threads=1):
    """BP fixed point and dense WLS for the measurement configuration at ``at``."""
    mset, _ = configuration_at(sc, at)
    g = fg.build(net, mset, at)
    state = gbp.init_messages(g)
    marg, sweeps, converged = gbp.run_to_convergence(
        g, state, eps, max_sweeps, sc.damping, threads)
    wls = wls_solve(net, mset, at)
    return marg, sweeps, converged, wls


def cmd_solve(cfg):
    net, sc = _load(cfg)
    marg, sweeps, converged, wls = solve_static(
        net, sc, cfg.at, cfg.eps, cfg.max_sweeps, cfg.threads)
    bp_deg = [float(x) for x in marg.mean * RAD2DEG]
    bp_var = [float(x) for x in marg.variance * RAD2DEG**2]
    lines = [f"# t={cfg.at!r} s  BP sweeps={sweeps} converged={converged}",
             f"# WLS cond={wls.cond:.6e} "
             + ("ok" if wls.success else f"FAILED ({wls.message})"),
             "bus,bp_deg,bp_var_deg2,wls_deg,abs_diff_deg"]
    max_diff = 0.0
    for s, bus in enumerate(net.bus_ids):
        if wls.success:
            w = float(wls.angles[s] * RAD2DEG)
            d = abs(bp_deg[s] - w)
            max_diff = max(max_diff, d)
            tail = f"{w!r},{d!r}"
        else:
            tail = "nan,nan"
        lines.append(f"{bus},{bp_deg[s]!r},{bp_var[s]!r},{tail}")
    lines.append(f"# max |BP - WLS| = {max_diff!r} deg" if wls.success
                 else "# max |BP - WLS| = n/a (WLS failed)")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if cfg.out:
        _atomic_write(cfg.out, lambda fh: fh.write(text))
    return 0


def cmd_probe(cfg):
    net, sc = _load(cfg)
    if len(sc.arrivals) != 1:
        raise UsageError(f"probe needs exactly one arrival, scenario has {len(sc.arrivals)}")
    watch = cfg.watch or net.bus_ids
    for b in watch:
        if b not in net.index:
            raise UsageError(f"unknown bus {b} in --watch")
    variances = cfg.variances or [sc.arrivals[0].sigma2_rt]
    rows = []
    for var in variances:
        probe_sc = replace(sc, arrivals=[replace(sc.arrivals[0], sigma2_rt=var)])
        for n, means in convergence_probe(probe_sc, watch, cfg.max_sweeps,
                                          threads=cfg.threads):
            rows.append(",".join([repr(float(var)), str(n)] + [repr(float(x)) for x in means]))
    header = ",".join(["sigma2_rt", "sweep"] + [f"theta_{b}_deg" for b in watch])
    text = header + "\n" + "\n".join(rows) + "\n"
    if cfg.out:
        _atomic_write(cfg.out, lambda fh: fh.write(text))
        print(f"wrote {len(rows)} trace rows to {cfg.out}")
    else:
        print(text, end="")
    return 0


def cmd_export_graph(cfg):
    net, sc = _load(cfg)
    mset, _ = configuration_at(sc, cfg.at)
    text = fg.build(net, mset, cfg.at).export_text()
    if cfg.out:
        _atomic_write(cfg.out, lambda fh: fh.write(text))
    else:
        print(text, end="")
    return 0


COMMANDS = {"run": cmd_run, "solve": cmd_solve, "probe": cmd_probe,
            "export-graph": cmd_export_graph}


def _bus_list(text):
    return [int(x) for x in text.replace(",", " ").split()]


def _float_list(text):
    return [float(x) for x in text.replace(",", " ").split()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gbpse", description="Streaming DC state estimation with Gaussian BP")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--case", required=True, help="case file")
        p.add_argument("--scenario", required=True, help="scenario file")
        p.add_argument("--out", help="output file (stdout if omitted, except for run)")
        p.add_argument("--eps", type=float, default=1e-9,
                       help="convergence threshold on marginal means (rad)")
        p.add_argument("--max-sweeps", type=int, default=100_000)
        p.add_argument("--sweep-interval", type=float,
                       help="simulated seconds per BP sweep")
        p.add_argument("--damping", type=float, help="message damping in (0, 1]")
        p.add_argument("--seed", type=int, help="overrides the scenario seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sweeps; never changes results")
        p.add_argument("--at", type=float, default=0.0,
                       help="time (s) of the static configuration for solve/export-graph")
        p.add_argument("--watch", type=_bus_list, help="buses to trace, e.g. 2,3,14")
        p.add_argument("--emit-plotdata", metavar="DIR",
                       help="also write per-bus time/angle files")
        p.add_argument("--variances", type=_float_list,
                       help="probe: arrival variances (MW^2) to trace in turn")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            case=args.case, scenario=args.scenario, out=args.out, eps=args.eps,
            max_sweeps=args.max_sweeps, sweep_interval=args.sweep_interval,
            damping=args.damping, seed=args.seed, threads=args.threads, at=args.at,
            watch=args.watch, emit_plotdata=args.emit_plotdata, variances=args.variances)
        return COMMANDS[args.command](cfg)
    except (UsageError, ValueError) as exc:
        print(f"gbpse {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gbpse {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
