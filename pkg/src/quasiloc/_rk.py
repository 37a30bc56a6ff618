"""Dormand-Prince 5(4) propagation of the 2x2 fundamental matrix.

The state of one trajectory is Y = [[u, v], [u', v']] stored as the four
numbers ``(u, v, u', v')``.  A batch is a ``(4, B)`` array; each trajectory
runs its own step-size controller, so a result never depends on which
other trajectories were in the batch.  Magnitudes stay near one because
the largest entry is factored into a per-trajectory log scale every
``renorm_interval`` time units.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import StepFailure

TWO_PI = 2.0 * math.pi

# Dormand & Prince (1980) coefficients.
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                                 22 / 525, -1 / 40)

_SAFETY = 0.9
MAX_STEPS = 20_000_000

OK, STEP_TOO_SMALL, TOO_MANY_STEPS = 0, 1, 2


@njit(cache=True)
def _rhs(t, y, out, x, theta_b, omega_b, energy_b, c0, ms, ks, res, ims):
    d = x.size
    for i in range(d):
        x[i] = theta_b[i] + t * omega_b[i]
    q = c0 - energy_b
    for j in range(ms.size):
        ph = ms[j] * t
        for i in range(d):
            ph = ph + ks[j, i] * x[i]
        ph = TWO_PI * ph
        if ims[j] == 0.0:
            q = q + 2.0 * res[j] * np.cos(ph)
        else:
            q = q + 2.0 * (res[j] * np.cos(ph) - ims[j] * np.sin(ph))
    out[0] = y[2]
    out[1] = y[3]
    out[2] = q * y[0]
    out[3] = q * y[1]


@njit(cache=True)
def _max_abs4(y):
    m = 0.0
    for i in range(4):
        a = abs(y[i])
        if a > m:
            m = a
    return m


@njit(cache=True)
def _kernel(c0, ms, ks, res, ims, mass, t0, t_out, theta, omega, energy, y0, log0,
            rtol, atol, renorm, max_step, states, logs_out, n_steps):
    B = theta.shape[0]
    d = theta.shape[1]
    n_out = t_out.size
    dtype_probe = theta[0, 0] * 0.0
    y = np.empty(4, dtype=y0.dtype)
    yt = np.empty(4, dtype=y0.dtype)
    yn = np.empty(4, dtype=y0.dtype)
    k = np.empty((7, 4), dtype=y0.dtype)
    x = np.empty(d, dtype=theta.dtype)
    t_end = t_out[n_out - 1] if n_out > 0 else t0
    direction = 1.0 if t_end >= t0 else -1.0
    span = abs(t_end - t0)
    h_min = 1e-13 * max(1.0, max(abs(t0), abs(t_end)))

    for b in range(B):
        th = theta[b]
        om = omega[b]
        en = energy[b] + dtype_probe
        for i in range(4):
            y[i] = y0[i, b]
        lg = log0[b]
        t = t0
        h = min(max_step, 0.1 / math.sqrt(1.0 + mass + abs(en)))
        if span > 0.0:
            h = min(h, span)
        next_renorm = t0 + direction * renorm
        _rhs(t, y, k[0], x, th, om, en, c0, ms, ks, res, ims)
        steps = 0
        i_out = 0
        while i_out < n_out and t_out[i_out] == t:
            for i in range(4):
                states[i_out, i, b] = y[i]
            logs_out[i_out, b] = lg
            i_out += 1

        while i_out < n_out:
            target = t_out[i_out]
            remaining = abs(target - t)
            last = h >= remaining
            step = remaining if last else h
            while True:
                s = direction * step
                for i in range(4):
                    yt[i] = y[i] + s * (_A21 * k[0, i])
                _rhs(t + _C2 * s, yt, k[1], x, th, om, en, c0, ms, ks, res, ims)
                for i in range(4):
                    yt[i] = y[i] + s * (_A31 * k[0, i] + _A32 * k[1, i])
                _rhs(t + _C3 * s, yt, k[2], x, th, om, en, c0, ms, ks, res, ims)
                for i in range(4):
                    yt[i] = y[i] + s * (_A41 * k[0, i] + _A42 * k[1, i] + _A43 * k[2, i])
                _rhs(t + _C4 * s, yt, k[3], x, th, om, en, c0, ms, ks, res, ims)
                for i in range(4):
                    yt[i] = y[i] + s * (_A51 * k[0, i] + _A52 * k[1, i] + _A53 * k[2, i]
                                        + _A54 * k[3, i])
                _rhs(t + _C5 * s, yt, k[4], x, th, om, en, c0, ms, ks, res, ims)
                for i in range(4):
                    yt[i] = y[i] + s * (_A61 * k[0, i] + _A62 * k[1, i] + _A63 * k[2, i]
                                        + _A64 * k[3, i] + _A65 * k[4, i])
                _rhs(t + s, yt, k[5], x, th, om, en, c0, ms, ks, res, ims)
                for i in range(4):
                    yn[i] = y[i] + s * (_B1 * k[0, i] + _B3 * k[2, i] + _B4 * k[3, i]
                                        + _B5 * k[4, i] + _B6 * k[5, i])
                t_new = target if last else t + s
                _rhs(t_new, yn, k[6], x, th, om, en, c0, ms, ks, res, ims)
                err = 0.0
                for i in range(4):
                    e = abs(s * (_E1 * k[0, i] + _E3 * k[2, i] + _E4 * k[3, i] + _E5 * k[4, i]
                                 + _E6 * k[5, i] + _E7 * k[6, i]))
                    if e > err:
                        err = e
                scale = atol + rtol * max(_max_abs4(y), _max_abs4(yn))
                err = err / scale
                if not math.isfinite(err):
                    err = 1e10
                if err <= 1.0:
                    break
                step *= max(0.2, _SAFETY * err ** -0.2)
                last = False
                if step < h_min:
                    return STEP_TOO_SMALL
            steps += 1
            if steps > MAX_STEPS:
                return TOO_MANY_STEPS
            if not last:
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, _SAFETY * err ** -0.2))
                h = min(max_step, step * factor)
            t = t_new
            for i in range(4):
                y[i] = yn[i]
                k[0, i] = k[6, i]

            if direction * (t - next_renorm) >= 0.0:
                m = _max_abs4(y)
                if m > 0.0:
                    for i in range(4):
                        y[i] = y[i] / m
                        k[0, i] = k[0, i] / m
                    lg += math.log(m)
                while direction * (t - next_renorm) >= 0.0:
                    next_renorm += direction * renorm

            while i_out < n_out and t_out[i_out] == t:
                for i in range(4):
                    states[i_out, i, b] = y[i]
                logs_out[i_out, b] = lg
                i_out += 1
        n_steps[b] = steps
    return OK


def propagate(potential, t0, t_out, theta, omega, energy, cfg, y0=None, log0=None):
    """Propagate a batch of fundamental matrices from ``t0`` through ``t_out``.

    Parameters
    ----------
    potential : AnalyticPotential
    t0 : float
        Start time. The initial state is the identity unless ``y0`` is given.
    t_out : array_like
        Output times, monotone and all on one side of ``t0``.
    theta : array_like, shape (B, d)
        Phases, real or complex.
    omega : array_like, shape (d,) or (B, d)
    energy : scalar or array_like, shape (B,)
    cfg : IntegratorConfig
    y0, log0 : optional initial states ``(4, B)`` and log scales ``(B,)``.

    Returns
    -------
    states : ndarray, shape (n_out, 4, B)
        Rows are ``(u, v, u', v')`` at each output time.
    logs : ndarray, shape (n_out, B)
    """
    t_out = np.atleast_1d(np.asarray(t_out, dtype=float))
    theta = np.atleast_2d(np.asarray(theta))
    B, d = theta.shape
    omega = np.broadcast_to(np.asarray(omega), (B, d))
    energy = np.broadcast_to(np.asarray(energy), (B,))
    complex_run = any(np.iscomplexobj(a) for a in (theta, omega, energy))
    if y0 is not None and np.iscomplexobj(y0):
        complex_run = True
    dtype = np.complex128 if complex_run else np.float64

    t_end = float(t_out[-1]) if t_out.size else float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    if np.any(direction * np.diff(np.concatenate(([t0], t_out))) < 0):
        raise ValueError("output times must be monotone and on one side of t0")
    if complex_run and theta.size:
        im = max(np.abs(np.imag(theta + t0 * omega)).max(), np.abs(np.imag(theta + t_end * omega)).max())
        potential.check_strip(0.0, im)

    if y0 is None:
        y0 = np.zeros((4, B), dtype=dtype)
        y0[0] = 1.0
        y0[3] = 1.0
    else:
        y0 = np.ascontiguousarray(np.asarray(y0, dtype=dtype).reshape(4, B))
    log0 = np.zeros(B) if log0 is None else np.ascontiguousarray(np.asarray(log0, float).reshape(B))

    states = np.empty((t_out.size, 4, B), dtype=dtype)
    logs = np.empty((t_out.size, B))
    n_steps = np.zeros(B, dtype=np.int64)
    if B == 0 or t_out.size == 0:
        return states, logs
    status = _kernel(potential._c0, potential._m, potential._k, potential._re, potential._im,
                     potential.coefficient_mass, float(t0), t_out,
                     np.ascontiguousarray(theta, dtype=dtype), np.ascontiguousarray(omega, dtype=dtype),
                     np.ascontiguousarray(energy, dtype=dtype), y0, log0,
                     float(cfg.rel_tol), float(cfg.abs_tol), float(cfg.renorm_interval),
                     float(cfg.max_step), states, logs, n_steps)
    if status == STEP_TOO_SMALL:
        raise StepFailure("step size fell below the minimum; tolerance cannot be met")
    if status == TOO_MANY_STEPS:
        raise StepFailure(f"more than {MAX_STEPS} steps on one trajectory")
    return states, logs


def normalise(states, logs):
    """Factor the max-entry magnitude of ``(..., 4, B)`` states into their log scales."""
    m = np.max(np.abs(states), axis=-2)
    m = np.where(m > 0, m, 1.0)
    return states / m[..., None, :], logs + np.log(m)
