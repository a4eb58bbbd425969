"""Dense oracles: DC power flow, WLS state estimation and its objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factor_graph import unit_scale
from .measurements import device_coefficients, variance_at
from .network import susceptance_matrix

WLS_COND_LIMIT = 1e16


def dc_power_flow(net, injections_pu, slack=None):
    """Bus angles (rad, bus order) for the given injections.

    ``injections_pu`` maps bus id to net injection; the slack injection is
    ignored and absorbs the mismatch.
    """
    slack = net.slack if slack is None else slack
    B = susceptance_matrix(net)
    P = np.zeros(net.n)
    for bus, p in injections_pu.items():
        P[net.index[bus]] = p
    keep = np.arange(net.n) != net.index[slack]
    theta = np.zeros(net.n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], P[keep])
    return theta


def jacobian(net, mset):
    """Measurement Jacobian H (k x n) in per-unit/radian units."""
    H = np.zeros((len(mset), net.n))
    for i, dev in enumerate(mset):
        for bus, c in device_coefficients(net, dev).items():
            H[i, net.index[bus]] = c
    return H


def measurement_vectors(net, mset, t):
    """Values z (pu/rad) and variances (pu^2/rad^2) without any clamping."""
    scale = np.array([unit_scale(net, d.kind) for d in mset])
    z = np.array([d.value_si for d in mset]) * scale
    var = np.array([variance_at(d, t) for d in mset]) * scale**2
    return z, var


def measurement_functions(net, mset, angles):
    """h(x) for every device, in SI-like device units (MW / deg)."""
    scale = np.array([unit_scale(net, d.kind) for d in mset])
    return jacobian(net, mset) @ angles / scale


@dataclass
class WlsResult:
    angles: np.ndarray | None
    cond: float
    success: bool
    message: str = ""


def wls_solve(net, mset, t=0.0, devices=None, buses=None):
    """Solve the normal equations (H^T W H) x = H^T W z by dense Cholesky.

    ``devices`` optionally restricts the solve to a subset of device ids and
    ``buses`` to a subset of state variables (the chosen devices must not
    touch any other bus); angles come back in the order of ``buses``.
    The 2-norm condition number of the gain matrix is always reported;
    beyond ``WLS_COND_LIMIT`` (or if factorization breaks down) the result
    is marked unsuccessful and ``angles`` is None.
    """
    H = jacobian(net, mset)
    z, var = measurement_vectors(net, mset, t)
    if devices is not None:
        rows = np.asarray(sorted(devices), dtype=int)
        H, z, var = H[rows], z[rows], var[rows]
    if buses is not None:
        cols = [net.index[b] for b in buses]
        rest = np.setdiff1d(np.arange(net.n), cols)
        if np.any(H[:, rest]):
            raise ValueError("selected devices reach buses outside the selection")
        H = H[:, cols]
    w = 1.0 / var
    G = H.T @ (w[:, None] * H)
    rhs = H.T @ (w * z)
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > WLS_COND_LIMIT:
        return WlsResult(None, cond, False, f"gain matrix ill-conditioned (cond={cond:.3e})")
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        return WlsResult(None, cond, False, f"factorization failed: {exc}")
    y = np.linalg.solve(L, rhs)
    x = np.linalg.solve(L.T, y)
    return WlsResult(x, cond, True)


def wls_covariance(net, mset, t=0.0):
    """diag((H^T W H)^-1), the WLS estimate variances (rad^2)."""
    H = jacobian(net, mset)
    _, var = measurement_vectors(net, mset, t)
    G = H.T @ (H / var[:, None])
    return np.diag(np.linalg.inv(G))


def objective(net, mset, t, angles):
    """Weighted sum of squared residuals, evaluated in device units."""
    z = np.array([d.value_si for d in mset])
    var = np.array([variance_at(d, t) for d in mset])
    r = z - measurement_functions(net, mset, angles)
    return float(np.sum(r * r / var))


def add_measurement_noise(values, variances, seed):
    """``values`` plus independent N(0, variance) draws, reproducible per seed."""
    values = np.asarray(values, dtype=float)
    variances = np.maximum(np.asarray(variances, dtype=float), 1e-60)
    rng = np.random.default_rng(seed)
    return values + rng.normal(0.0, 1.0, size=values.shape) * np.sqrt(variances)


def exact_measurements(net, mset, angles):
    """Noise-free device values for a given angle vector (MW / deg)."""
    return measurement_functions(net, mset, angles)
