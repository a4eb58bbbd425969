"""Compiled message-passing loops.

Each output message reads only the previous buffers, and every sum runs in
adjacency order, so the serial and parallel variants agree bit for bit.
"""
import os

import numba
import numpy as np
from numba import prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # prefer OpenMP; older TBB builds only emit warnings
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

VAR_MIN = 1e-60
VAR_MAX = 1e60


@numba.njit(inline="always")
def _clamp(v):
    if v < VAR_MIN:
        return VAR_MIN
    if v > VAR_MAX:
        return VAR_MAX
    return v


@numba.njit(inline="always")
def _v2f_node(s, var_ptr, var_edges, f2v_mean, f2v_var, out_mean, out_var):
    lo, hi = var_ptr[s], var_ptr[s + 1]
    for a in range(lo, hi):
        e = var_edges[a]
        prec = 0.0
        pm = 0.0
        for b in range(lo, hi):
            if b == a:
                continue
            o = var_edges[b]
            p = 1.0 / f2v_var[o]
            prec += p
            pm += f2v_mean[o] * p
        if prec > 0.0:
            out_mean[e] = pm / prec
            out_var[e] = _clamp(1.0 / prec)
        else:
            out_mean[e] = 0.0
            out_var[e] = VAR_MAX


@numba.njit(inline="always")
def _f2v_node(f, fac_ptr, coeff, value, variance, v2f_mean, v2f_var,
              old_mean, old_var, alpha, out_mean, out_var):
    lo, hi = fac_ptr[f], fac_ptr[f + 1]
    changed = False
    for e in range(lo, hi):
        s1 = 0.0
        s2 = 0.0
        for o in range(lo, hi):
            if o == e:
                continue
            c = coeff[o]
            s1 += c * v2f_mean[o]
            s2 += c * c * v2f_var[o]
        c = coeff[e]
        m = (value[f] - s1) / c
        v = _clamp((variance[f] + s2) / (c * c))
        if alpha != 1.0:
            # damp in information form: precision and precision * mean
            p = alpha / v + (1.0 - alpha) / old_var[e]
            h = alpha * m / v + (1.0 - alpha) * old_mean[e] / old_var[e]
            m = h / p
            v = _clamp(1.0 / p)
        if m != old_mean[e] or v != old_var[e]:
            changed = True
        out_mean[e] = m
        out_var[e] = v
    return changed


@numba.njit(cache=True)
def v2f_pass(var_ptr, var_edges, f2v_mean, f2v_var, out_mean, out_var):
    for s in range(var_ptr.shape[0] - 1):
        _v2f_node(s, var_ptr, var_edges, f2v_mean, f2v_var, out_mean, out_var)


@numba.njit(cache=True)
def f2v_pass(fac_ptr, coeff, value, variance, v2f_mean, v2f_var,
             old_mean, old_var, alpha, out_mean, out_var):
    changed = False
    for f in range(fac_ptr.shape[0] - 1):
        if _f2v_node(f, fac_ptr, coeff, value, variance, v2f_mean, v2f_var,
                     old_mean, old_var, alpha, out_mean, out_var):
            changed = True
    return changed


@numba.njit(cache=True, parallel=True)
def v2f_pass_parallel(var_ptr, var_edges, f2v_mean, f2v_var, out_mean, out_var):
    for s in prange(var_ptr.shape[0] - 1):
        _v2f_node(s, var_ptr, var_edges, f2v_mean, f2v_var, out_mean, out_var)


@numba.njit(cache=True, parallel=True)
def f2v_pass_parallel(fac_ptr, coeff, value, variance, v2f_mean, v2f_var,
                      old_mean, old_var, alpha, out_mean, out_var):
    k = fac_ptr.shape[0] - 1
    flags = np.zeros(k, dtype=np.bool_)
    for f in prange(k):
        flags[f] = _f2v_node(f, fac_ptr, coeff, value, variance, v2f_mean, v2f_var,
                             old_mean, old_var, alpha, out_mean, out_var)
    return flags.any()


@numba.njit(cache=True)
def marginals(var_ptr, var_edges, f2v_mean, f2v_var, out_mean, out_var):
    for s in range(var_ptr.shape[0] - 1):
        prec = 0.0
        pm = 0.0
        for a in range(var_ptr[s], var_ptr[s + 1]):
            o = var_edges[a]
            p = 1.0 / f2v_var[o]
            prec += p
            pm += f2v_mean[o] * p
        out_mean[s] = pm / prec
        out_var[s] = _clamp(1.0 / prec)
