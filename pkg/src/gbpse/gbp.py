"""Gaussian belief propagation on a DC factor graph.

Messages are (mean, variance) pairs; they are combined in precision form so
that variances near ``VAR_MAX`` simply contribute almost nothing. Every
computed variance is clamped to ``[VAR_MIN, VAR_MAX]``.

The schedule is synchronous: a sweep recomputes all variable-to-factor
messages from the current factor-to-variable messages, then all
factor-to-variable messages from those.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels
from .factor_graph import VAR_MAX, VAR_MIN


@dataclass(frozen=True)
class GaussianMessage:
    mean: float
    variance: float


@dataclass(frozen=True)
class Marginal:
    mean: float
    variance: float


@dataclass
class Marginals:
    """Per-variable marginal means (rad) and variances (rad^2), in bus order."""

    mean: np.ndarray
    variance: np.ndarray

    def __getitem__(self, s):
        return Marginal(float(self.mean[s]), float(self.variance[s]))


def _clamp(v):
    return min(max(v, VAR_MIN), VAR_MAX)


def variable_to_factor(incoming):
    """Combine the messages a variable received from all *other* factors."""
    prec = 0.0
    pm = 0.0
    for msg in incoming:
        p = 1.0 / msg.variance
        prec += p
        pm += msg.mean * p
    if prec > 0.0:
        return GaussianMessage(pm / prec, _clamp(1.0 / prec))
    return GaussianMessage(0.0, VAR_MAX)


def factor_to_variable(f, target, incoming):
    """Message from factor ``f`` to the variable of bus ``target``.

    ``incoming`` is a list of ``(coefficient, message)`` pairs, one for each
    other variable of the factor.
    """
    c = f.coefficients[target]
    assert c != 0.0, "factor does not depend on target"
    s1 = 0.0
    s2 = 0.0
    for coeff, msg in incoming:
        s1 += coeff * msg.mean
        s2 += coeff * coeff * msg.variance
    return GaussianMessage((f.value_pu - s1) / c, _clamp((f.variance_pu + s2) / (c * c)))


def marginal(incoming):
    if not incoming:
        raise ValueError("marginal needs at least one incoming message")
    prec = 0.0
    pm = 0.0
    for msg in incoming:
        p = 1.0 / msg.variance
        prec += p
        pm += msg.mean * p
    return Marginal(pm / prec, _clamp(1.0 / prec))


class MessageState:
    """Both message directions for every edge, stored per edge index."""

    def __init__(self, n_edges):
        self.v2f_mean = np.zeros(n_edges)
        self.v2f_var = np.full(n_edges, VAR_MAX)
        self.f2v_mean = np.zeros(n_edges)
        self.f2v_var = np.full(n_edges, VAR_MAX)
        self.iteration = 0
        self._spare_mean = np.empty(n_edges)
        self._spare_var = np.empty(n_edges)

    def v2f(self, edge):
        return GaussianMessage(float(self.v2f_mean[edge]), float(self.v2f_var[edge]))

    def f2v(self, edge):
        return GaussianMessage(float(self.f2v_mean[edge]), float(self.f2v_var[edge]))

    def copy(self):
        new = MessageState(len(self.v2f_mean))
        for name in ("v2f_mean", "v2f_var", "f2v_mean", "f2v_var"):
            getattr(new, name)[:] = getattr(self, name)
        new.iteration = self.iteration
        return new


def init_messages(g):
    """Degree-1 factors start with their own measurement; all others flat."""
    s = MessageState(len(g.edges))
    for f in range(g.k):
        if g.degree(f) == 1:
            e = g.fac_ptr[f]
            c = g.edge_coeff[e]
            s.f2v_mean[e] = g.value[f] / c
            s.f2v_var[e] = _clamp(g.variance[f] / (c * c))
    _kernels.v2f_pass(g.var_ptr, g.var_edges, s.f2v_mean, s.f2v_var, s.v2f_mean, s.v2f_var)
    return s


def _set_threads(threads):
    threads = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(threads)
    return threads


def sweep(g, s, damping=1.0, threads=1):
    """One synchronous iteration. Returns False iff no factor message changed.

    ``damping`` mixes new factor-to-variable messages with the previous ones
    in information form (1 means undamped). ``threads`` > 1 runs the parallel kernels; results
    are identical for any thread count.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if threads > 1 and _set_threads(threads) > 1:
        v2f, f2v = _kernels.v2f_pass_parallel, _kernels.f2v_pass_parallel
    else:
        v2f, f2v = _kernels.v2f_pass, _kernels.f2v_pass
    v2f(g.var_ptr, g.var_edges, s.f2v_mean, s.f2v_var, s.v2f_mean, s.v2f_var)
    new_mean, new_var = s._spare_mean, s._spare_var
    changed = f2v(g.fac_ptr, g.edge_coeff, g.value, g.variance, s.v2f_mean, s.v2f_var,
                  s.f2v_mean, s.f2v_var, float(damping), new_mean, new_var)
    s._spare_mean, s.f2v_mean = s.f2v_mean, new_mean
    s._spare_var, s.f2v_var = s.f2v_var, new_var
    s.iteration += 1
    return bool(changed)


def marginals(g, s):
    out = Marginals(np.empty(g.n), np.empty(g.n))
    _kernels.marginals(g.var_ptr, g.var_edges, s.f2v_mean, s.f2v_var, out.mean, out.variance)
    return out


def run_to_convergence(g, s, eps=1e-9, max_sweeps=10_000, damping=1.0, threads=1,
                       var_rtol=1e-9):
    """Sweep until no marginal mean moves by ``eps`` rad or more and no
    marginal variance changes by ``var_rtol`` (relative) or more.

    The variance test matters after a cold start with pseudo-measurements:
    huge variances shrink by orders of magnitude per sweep while the means
    barely move. Returns ``(marginals, sweeps_used, converged)``; a state
    that is already a fixed point converges after one sweep.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    current = marginals(g, s)
    for k in range(1, max_sweeps + 1):
        changed = sweep(g, s, damping, threads)
        new = marginals(g, s)
        if not np.all(np.isfinite(new.mean)):
            return new, k, False
        delta = np.max(np.abs(new.mean - current.mean))
        var_delta = np.max(np.abs(new.variance - current.variance) / current.variance)
        current = new
        if (delta < eps and var_delta < var_rtol) or not changed:
            return current, k, True
    return current, max_sweeps, False


def sweep_reference(g, s):
    """Edge-by-edge sweep built from the scalar message functions.

    Much slower than :func:`sweep`; used to cross-check the compiled kernels.
    """
    edge_of = {(f, v): e for e, (f, v) in enumerate(g.edges)}
    v2f_mean = np.empty_like(s.v2f_mean)
    v2f_var = np.empty_like(s.v2f_var)
    for var in range(g.n):
        fs = g.variables[var].factors
        for f in fs:
            msg = variable_to_factor([s.f2v(edge_of[(o, var)]) for o in fs if o != f])
            e = edge_of[(f, var)]
            v2f_mean[e], v2f_var[e] = msg.mean, msg.variance
    f2v_mean = np.empty_like(s.f2v_mean)
    f2v_var = np.empty_like(s.f2v_var)
    for f, node in enumerate(g.factors):
        lo, hi = g.fac_ptr[f], g.fac_ptr[f + 1]
        for e in range(lo, hi):
            incoming = [(g.edge_coeff[o], GaussianMessage(v2f_mean[o], v2f_var[o]))
                        for o in range(lo, hi) if o != e]
            msg = factor_to_variable(node, g.bus_ids[g.edge_var[e]], incoming)
            f2v_mean[e], f2v_var[e] = msg.mean, msg.variance
    s.v2f_mean, s.v2f_var = v2f_mean, v2f_var
    s.f2v_mean, s.f2v_var = f2v_mean, f2v_var
    s.iteration += 1
