"""Bipartite factor graph of a DC state-estimation problem.

One variable node per bus angle, one factor node per measurement device.
Topology is fixed at build time; factor values and variances are mutable
through :func:`update_factor` so that a running BP instance keeps its
messages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measurements import device_coefficients, variance_at

VAR_MIN = 1e-60
VAR_MAX = 1e60

DEG2RAD = math.pi / 180.0


@dataclass
class VariableNode:
    bus: int
    factors: list[int]


class FactorNode:
    """One measurement factor. Once placed in a graph, ``value_pu`` and
    ``variance_pu`` read through to the graph's parameter arrays."""

    def __init__(self, device, coefficients, value_pu, variance_pu, variables):
        self.device = device
        self.coefficients = coefficients
        self.variables = variables
        self._params = (np.array([value_pu], dtype=np.float64),
                        np.array([variance_pu], dtype=np.float64), 0)

    @property
    def value_pu(self):
        values, _, i = self._params
        return float(values[i])

    @property
    def variance_pu(self):
        _, variances, i = self._params
        return float(variances[i])

    def __repr__(self):
        return (f"FactorNode(device={self.device}, coefficients={self.coefficients}, "
                f"value_pu={self.value_pu!r}, variance_pu={self.variance_pu!r})")


class FactorGraph:
    """Factor graph plus the flat edge arrays the message kernels run on.

    Edges are sorted by (factor, variable index). ``fac_ptr`` delimits the
    edges of each factor; ``var_edges[var_ptr[s]:var_ptr[s+1]]`` lists the
    edges of variable ``s`` in factor order.
    """

    def __init__(self, bus_ids, factors):
        self.bus_ids = list(bus_ids)
        self.var_index = {b: s for s, b in enumerate(self.bus_ids)}
        self.factors = factors

        edges = []
        for f, node in enumerate(factors):
            for bus in sorted(node.coefficients, key=self.var_index.__getitem__):
                edges.append((f, self.var_index[bus], node.coefficients[bus]))
        self.edges = [(f, s) for f, s, _ in edges]
        self.edge_factor = np.array([e[0] for e in edges], dtype=np.int64)
        self.edge_var = np.array([e[1] for e in edges], dtype=np.int64)
        self.edge_coeff = np.array([e[2] for e in edges], dtype=np.float64)

        k, n = len(factors), len(self.bus_ids)
        self.fac_ptr = np.zeros(k + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_factor, minlength=k), out=self.fac_ptr[1:])
        # stable sort keeps factor order inside each variable
        self.var_edges = np.argsort(self.edge_var, kind="stable").astype(np.int64)
        self.var_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_var, minlength=n), out=self.var_ptr[1:])

        self.variables = [
            VariableNode(b, [int(self.edge_factor[e])
                             for e in self.var_edges[self.var_ptr[s]:self.var_ptr[s + 1]]])
            for s, b in enumerate(self.bus_ids)
        ]
        self.value = np.array([f.value_pu for f in factors], dtype=np.float64)
        self.variance = np.array([f.variance_pu for f in factors], dtype=np.float64)
        self.device_to_factor = {f.device: i for i, f in enumerate(factors)}
        for i, node in enumerate(factors):
            node._params = (self.value, self.variance, i)

    @property
    def n(self):
        return len(self.bus_ids)

    @property
    def k(self):
        return len(self.factors)

    def degree(self, f):
        return int(self.fac_ptr[f + 1] - self.fac_ptr[f])

    def jacobian(self):
        H = np.zeros((self.k, self.n))
        H[self.edge_factor, self.edge_var] = self.edge_coeff
        return H

    def export_text(self):
        """Edge list, one ``f<device> -- x<bus> [C=<coeff>]`` line per edge."""
        return "".join(
            f"f{self.factors[f].device} -- x{self.bus_ids[s]} [C={float(c)!r}]\n"
            for (f, s), c in zip(self.edges, self.edge_coeff))


def unit_scale(net, kind):
    """Factor from SI-like device units to per-unit / radians."""
    return DEG2RAD if kind == "angle" else 1.0 / net.base_mva


def to_internal(net, dev, value_si, variance_si):
    scale = unit_scale(net, dev.kind)
    var = min(max(variance_si * scale * scale, VAR_MIN), VAR_MAX)
    return value_si * scale, var


def build(net, mset, t=0.0):
    """Build the factor graph for ``mset`` with variances evaluated at ``t``."""
    factors = []
    for dev in mset:
        coeffs = device_coefficients(net, dev)
        value, var = to_internal(net, dev, dev.value_si, variance_at(dev, t))
        variables = sorted(coeffs, key=net.index.__getitem__)
        factors.append(FactorNode(dev.id, coeffs, value, var, variables))
    return FactorGraph(net.bus_ids, factors)


def update_factor(g, device, value_pu, variance_pu):
    """Replace one factor's measured value and variance in place."""
    try:
        f = g.device_to_factor[device]
    except KeyError:
        raise KeyError(f"unknown device {device!r}") from None
    if not variance_pu > 0:
        raise ValueError(f"variance must be positive, got {variance_pu}")
    g.value[f] = value_pu
    g.variance[f] = min(max(variance_pu, VAR_MIN), VAR_MAX)


def update_factors(g, rows, values, variances):
    """Vectorised :func:`update_factor` by factor index; variances pre-validated."""
    g.value[rows] = values
    g.variance[rows] = np.clip(variances, VAR_MIN, VAR_MAX)
