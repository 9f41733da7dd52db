"""Compiled time-stepping kernels for the lattice ODE.

Ghost cells are described per side by a mode and two values:
mode 0 holds the value ``pre`` up to ``t_switch`` and ``post`` afterwards;
mode 1 sets the ghost to S^{-1} of the clamped adjacent layer.
A step whose interior contains ``t_switch`` is split there, so no RK4 stage
ever sees the jump of a flashed input.
"""

import math

import numpy as np
from numba import njit

FIXED = 0
INVERSE_SIGMOID = 1

EULER = 0
RK4 = 1

_CLAMP = 1e-12


@njit(cache=True)
def _sig(x, mu, theta):
    z = mu * (x - theta)
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _inv_sig(y, mu, theta):
    if y < _CLAMP:
        y = _CLAMP
    elif y > 1.0 - _CLAMP:
        y = 1.0 - _CLAMP
    return theta + math.log(y / (1.0 - y)) / mu


@njit(cache=True)
def _ghost(mode, value, edge, mu, theta):
    if mode == INVERSE_SIGMOID:
        return _inv_sig(edge, mu, theta)
    return value


@njit(cache=True)
def _rhs(v, lmode, lval, rmode, rval, mu, theta, p, q, sv, out):
    n = v.shape[0]
    a = 1.0 - p - q
    gl = _ghost(lmode, lval, v[0], mu, theta)
    gr = _ghost(rmode, rval, v[n - 1], mu, theta)
    for j in range(n):
        sv[j] = _sig(v[j], mu, theta)
    sl = _sig(gl, mu, theta)
    sr = _sig(gr, mu, theta)
    for j in range(n):
        if j == 0:
            u = gl
            su = sl
        else:
            u = v[j - 1]
            su = sv[j - 1]
        if j == n - 1:
            sw = sr
        else:
            sw = sv[j + 1]
        s = sv[j]
        out[j] = a * (su - v[j]) + p * mu * s * (1.0 - s) * (u - s) + q * (sw - v[j])


@njit(cache=True)
def _substep(v, h, method, lmode, lval, rmode, rval, mu, theta, p, q, k1, k2, k3, k4, tmp, sv):
    n = v.shape[0]
    _rhs(v, lmode, lval, rmode, rval, mu, theta, p, q, sv, k1)
    if method == EULER:
        for j in range(n):
            v[j] += h * k1[j]
        return
    for j in range(n):
        tmp[j] = v[j] + 0.5 * h * k1[j]
    _rhs(tmp, lmode, lval, rmode, rval, mu, theta, p, q, sv, k2)
    for j in range(n):
        tmp[j] = v[j] + 0.5 * h * k2[j]
    _rhs(tmp, lmode, lval, rmode, rval, mu, theta, p, q, sv, k3)
    for j in range(n):
        tmp[j] = v[j] + h * k3[j]
    _rhs(tmp, lmode, lval, rmode, rval, mu, theta, p, q, sv, k4)
    for j in range(n):
        v[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True)
def advance(v, step0, nsteps, dt, method, mu, theta, p, q,
            lmode, lpre, lpost, rmode, rpre, rpost, t_switch):
    """Advance ``v`` in place by ``nsteps`` steps starting at step index ``step0``.

    Returns False as soon as a non-finite value appears.
    """
    n = v.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    sv = np.empty(n)
    eps = 1e-9 * dt
    for i in range(nsteps):
        t0 = (step0 + i) * dt
        t1 = t0 + dt
        if t1 <= t_switch + eps:
            _substep(v, dt, method, lmode, lpre, rmode, rpre, mu, theta, p, q, k1, k2, k3, k4, tmp, sv)
        elif t0 >= t_switch - eps:
            _substep(v, dt, method, lmode, lpost, rmode, rpost, mu, theta, p, q, k1, k2, k3, k4, tmp, sv)
        else:
            _substep(v, t_switch - t0, method, lmode, lpre, rmode, rpre, mu, theta, p, q,
                     k1, k2, k3, k4, tmp, sv)
            _substep(v, t1 - t_switch, method, lmode, lpost, rmode, rpost, mu, theta, p, q,
                     k1, k2, k3, k4, tmp, sv)
        for j in range(n):
            if not math.isfinite(v[j]):
                return False
    return True


@njit(cache=True)
def residual(v, lmode, lval, rmode, rval, mu, theta, p, q):
    """Layerwise vector field at a frozen state."""
    n = v.shape[0]
    out = np.empty(n)
    sv = np.empty(n)
    _rhs(v, lmode, lval, rmode, rval, mu, theta, p, q, sv, out)
    return out
