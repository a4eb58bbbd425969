"""Bus/branch network model and case-file parsing.

Case files are plain text::

    # comment
    base_mva=100
    branch_unit=reactance        # optional, default susceptance
    [buses]
    1 slack
    2
    [branches]
    1 2 -16.9
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class CaseFormatError(ValueError):
    """Invalid case file content. ``line`` is 1-based, or None for whole-file errors."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Bus:
    id: int
    name: str | None = None
    is_slack: bool = False


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance_pu: float


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable, validated bus/branch model.

    Bus ids are the external labels from the case file; ``index`` maps them
    to contiguous positions 0..n-1 in sorted id order.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 100.0
    index: dict = field(init=False, repr=False)
    _adjacency: dict = field(init=False, repr=False)

    def __post_init__(self):
        buses = tuple(sorted(self.buses, key=lambda b: b.id))
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "index", {b.id: k for k, b in enumerate(buses)})
        adj = {b.id: set() for b in buses}
        for br in self.branches:
            if br.from_bus in adj and br.to_bus in adj:
                adj[br.from_bus].add(br.to_bus)
                adj[br.to_bus].add(br.from_bus)
        object.__setattr__(self, "_adjacency", adj)

    @property
    def n(self):
        return len(self.buses)

    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    @property
    def slack(self):
        return next(b.id for b in self.buses if b.is_slack)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.buses == other.buses and self.branches == other.branches
                and self.base_mva == other.base_mva)

    __hash__ = None


def validate(net):
    """Raise CaseFormatError if ``net`` breaks a structural invariant."""
    seen = set()
    for b in net.buses:
        if b.id in seen:
            raise CaseFormatError(f"duplicate bus id {b.id}")
        seen.add(b.id)
    nslack = sum(b.is_slack for b in net.buses)
    if nslack != 1:
        raise CaseFormatError(f"expected exactly one slack bus, found {nslack}")
    for br in net.branches:
        for bus in (br.from_bus, br.to_bus):
            if bus not in seen:
                raise CaseFormatError(f"unknown bus {bus} in branch")
        if br.from_bus == br.to_bus:
            raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus} is a self loop")
        if br.susceptance_pu == 0:
            raise CaseFormatError(f"zero susceptance on branch {br.from_bus}-{br.to_bus}")
    if not _is_connected(net):
        raise CaseFormatError("network graph is disconnected")


def _is_connected(net):
    if net.n == 0:
        return False
    start = net.buses[0].id
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in net._adjacency[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == net.n


def parse_case(text):
    """Parse case-file text into a validated :class:`Network`."""
    base_mva = 100.0
    unit = "susceptance"
    section = None
    buses, branches = [], []
    bus_lines, branch_lines = {}, []
    slack_lines = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("buses", "branches"):
                raise CaseFormatError(f"unknown section [{section}]", lineno)
            continue
        if "=" in line and section is None:
            key, _, value = (s.strip() for s in line.partition("="))
            if key == "base_mva":
                try:
                    base_mva = float(value)
                except ValueError:
                    raise CaseFormatError(f"bad base_mva {value!r}", lineno) from None
                if not base_mva > 0:
                    raise CaseFormatError("base_mva must be positive", lineno)
            elif key == "branch_unit":
                if value not in ("susceptance", "reactance"):
                    raise CaseFormatError(f"bad branch_unit {value!r}", lineno)
                unit = value
            else:
                raise CaseFormatError(f"unknown header key {key!r}", lineno)
            continue

        tokens = line.split()
        if section == "buses":
            try:
                bid = int(tokens[0])
            except ValueError:
                raise CaseFormatError(f"bad bus id {tokens[0]!r}", lineno) from None
            if bid in bus_lines:
                raise CaseFormatError(f"duplicate bus id {bid}", lineno)
            is_slack = False
            name = None
            for tok in tokens[1:]:
                if tok.lower() == "slack":
                    is_slack = True
                elif name is None:
                    name = tok
                else:
                    raise CaseFormatError(f"unexpected token {tok!r}", lineno)
            bus_lines[bid] = lineno
            if is_slack:
                slack_lines.append(lineno)
            buses.append(Bus(bid, name, is_slack))
        elif section == "branches":
            if len(tokens) != 3:
                raise CaseFormatError("branch line needs 'from to value'", lineno)
            try:
                f, t, val = int(tokens[0]), int(tokens[1]), float(tokens[2])
            except ValueError:
                raise CaseFormatError(f"malformed branch line {line!r}", lineno) from None
            if val == 0:
                raise CaseFormatError(f"zero {unit} on branch {f}-{t}", lineno)
            if f == t:
                raise CaseFormatError(f"branch {f}-{t} is a self loop", lineno)
            b = -1.0 / val if unit == "reactance" else val
            branches.append(Branch(f, t, b))
            branch_lines.append(lineno)
        else:
            raise CaseFormatError("data line outside of a section", lineno)

    for br, lineno in zip(branches, branch_lines):
        for bus in (br.from_bus, br.to_bus):
            if bus not in bus_lines:
                raise CaseFormatError(f"unknown bus {bus} in branch", lineno)
    if len(slack_lines) != 1:
        where = slack_lines[1] if len(slack_lines) > 1 else None
        raise CaseFormatError(
            f"expected exactly one slack bus, found {len(slack_lines)}", where)

    net = Network(tuple(buses), tuple(branches), base_mva)
    if not _is_connected(net):
        raise CaseFormatError("network graph is disconnected")
    return net


def render_case(net):
    """Inverse of :func:`parse_case` (susceptance form)."""
    out = [f"base_mva={net.base_mva!r}", "[buses]"]
    for b in net.buses:
        parts = [str(b.id)]
        if b.is_slack:
            parts.append("slack")
        if b.name is not None:
            parts.append(b.name)
        out.append(" ".join(parts))
    out.append("[branches]")
    for br in net.branches:
        out.append(f"{br.from_bus} {br.to_bus} {br.susceptance_pu!r}")
    return "\n".join(out) + "\n"


def load_case(path):
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read())


def neighbors(net, i):
    """Buses sharing at least one branch with bus ``i``."""
    if i not in net.index:
        raise KeyError(f"unknown bus {i}")
    return set(net._adjacency[i])


def incident_branches(net, i):
    """Indices of branches touching bus ``i``, in case order."""
    return [k for k, br in enumerate(net.branches) if i in (br.from_bus, br.to_bus)]


def measurement_coefficients(net, kind, location):
    """Linear coefficients of a DC measurement function.

    ``kind`` is ``"flow"`` (location = branch index), ``"injection"`` or
    ``"angle"`` (location = bus id). Returns ``{bus_id: coefficient}`` with
    the flow oriented from ``from_bus`` to ``to_bus``.
    """
    if kind == "flow":
        if not (isinstance(location, (int, np.integer)) and 0 <= location < len(net.branches)):
            raise KeyError(f"unknown branch {location!r}")
        br = net.branches[location]
        return {br.from_bus: -br.susceptance_pu, br.to_bus: br.susceptance_pu}
    if location not in net.index:
        raise KeyError(f"unknown bus {location!r}")
    if kind == "angle":
        return {location: 1.0}
    if kind == "injection":
        coeffs = {location: 0.0}
        for k in incident_branches(net, location):
            br = net.branches[k]
            other = br.to_bus if br.from_bus == location else br.from_bus
            coeffs[location] -= br.susceptance_pu
            coeffs[other] = coeffs.get(other, 0.0) + br.susceptance_pu
        return coeffs
    raise ValueError(f"unknown measurement kind {kind!r}")


def susceptance_matrix(net):
    """Nodal matrix B' with P = B' theta (dense, n x n)."""
    B = np.zeros((net.n, net.n))
    for br in net.branches:
        i, j = net.index[br.from_bus], net.index[br.to_bus]
        y = -br.susceptance_pu
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
    return B
