"""Compiled inner loops for trajectory simulation.

The hot path of every experiment is a fixed-step RK4 loop whose right-hand
side evaluates the cost a handful of times per step (full system) or once
per quadrature node (average system). For the builtin cost families those
loops are compiled with numba; everything else, and any run with the
compiled path disabled, goes through the vectorized numpy machinery in
:mod:`esc_lab.simulate` / :mod:`esc_lab.integrate`.

Set ``ESC_LAB_NUMBA=0`` (also accepts ``false``/``off``/``no``) to force the
numpy fallback; a missing numba install falls back silently. The flag is read
at call time, so tests and benchmarks can flip paths per run.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

__all__ = ["numba_available", "numba_enabled", "rmsp_loop", "gesc_loop", "avg_loop"]


def numba_available() -> bool:
    return numba is not None


def numba_enabled() -> bool:
    """True when the compiled kernels should be used."""
    flag = os.environ.get("ESC_LAB_NUMBA", "1").strip().lower()
    return numba is not None and flag not in {"0", "false", "off", "no"}


def _maybe_njit(f):
    return numba.njit(cache=True)(f) if numba is not None else f


@_maybe_njit
def _cost_val(kind, j_opt, star, hmat, theta):
    n = theta.shape[0]
    if kind == 0:  # quadratic: j_opt + 0.5 (theta - star)' H (theta - star)
        acc = 0.0
        for i in range(n):
            row = 0.0
            for j in range(n):
                row += hmat[i, j] * (theta[j] - star[j])
            acc += (theta[i] - star[i]) * row
        return j_opt + 0.5 * acc
    # quartic: j_opt + sum (theta - star)^4 / 24
    acc = 0.0
    for i in range(n):
        d = theta[i] - star[i]
        acc += d * d * d * d
    return j_opt + acc / 24.0


@_maybe_njit
def _rmsp_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, eps, wl, wxi, t, y, out, work):
    n = amps.shape[0]
    for i in range(n):
        work[i] = np.sin(omega * rates[i] * t)
    for i in range(n):
        work[n + i] = y[i] + amps[i] * work[i]
    meas = _cost_val(kind, j_opt, star, hmat, work[n : 2 * n])
    xi = y[2 * n]
    for i in range(n):
        v = y[n + i]
        if v < 0.0:
            v = 0.0
        g = (2.0 / amps[i]) * work[i] * (meas - xi)
        out[i] = -k * g / (np.sqrt(v) + eps)
        out[n + i] = wl[i] * (g * g - v)
    out[2 * n] = wxi * (meas - xi)


@_maybe_njit
def _rmsp_loop(kind, j_opt, star, hmat, amps, rates, omega, k, eps, wl, wxi,
               y0, t0, h, nsteps, stride, times, states, fail_state):
    """RK4 over the full loop state [theta (n), v (n), xi]. Returns
    (clamp_events, fail_step); fail_step is -1 when every state stayed finite."""
    n = amps.shape[0]
    d = 2 * n + 1
    y = y0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    ytmp = np.empty(d)
    work = np.empty(2 * n)
    times[0] = t0
    for j in range(d):
        states[0, j] = y[j]
    rec = 1
    clamp_events = 0
    for step in range(nsteps):
        t = t0 + step * h
        _rmsp_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, eps, wl, wxi, t, y, k1, work)
        for j in range(d):
            ytmp[j] = y[j] + 0.5 * h * k1[j]
        _rmsp_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, eps, wl, wxi, t + 0.5 * h, ytmp, k2, work)
        for j in range(d):
            ytmp[j] = y[j] + 0.5 * h * k2[j]
        _rmsp_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, eps, wl, wxi, t + 0.5 * h, ytmp, k3, work)
        for j in range(d):
            ytmp[j] = y[j] + h * k3[j]
        _rmsp_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, eps, wl, wxi, t + h, ytmp, k4, work)
        for j in range(d):
            y[j] = y[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        clamped = False
        for i in range(n):
            if y[n + i] < 0.0:
                y[n + i] = 0.0
                clamped = True
        if clamped:
            clamp_events += 1
        ok = True
        for j in range(d):
            if not np.isfinite(y[j]):
                ok = False
        if not ok:
            for j in range(d):
                fail_state[j] = y[j]
            return clamp_events, step + 1
        if (step + 1) % stride == 0 or step + 1 == nsteps:
            times[rec] = t0 + (step + 1) * h
            for j in range(d):
                states[rec, j] = y[j]
            rec += 1
    return clamp_events, -1


@_maybe_njit
def _gesc_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, wxi, t, y, out, work):
    n = amps.shape[0]
    for i in range(n):
        work[i] = np.sin(omega * rates[i] * t)
    for i in range(n):
        work[n + i] = y[i] + amps[i] * work[i]
    meas = _cost_val(kind, j_opt, star, hmat, work[n : 2 * n])
    xi = y[n]
    for i in range(n):
        g = (2.0 / amps[i]) * work[i] * (meas - xi)
        out[i] = -k * g
    out[n] = wxi * (meas - xi)


@_maybe_njit
def _gesc_loop(kind, j_opt, star, hmat, amps, rates, omega, k, wxi,
               y0, t0, h, nsteps, stride, times, states, fail_state):
    """RK4 over the baseline state [theta (n), xi]."""
    n = amps.shape[0]
    d = n + 1
    y = y0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    ytmp = np.empty(d)
    work = np.empty(2 * n)
    times[0] = t0
    for j in range(d):
        states[0, j] = y[j]
    rec = 1
    for step in range(nsteps):
        t = t0 + step * h
        _gesc_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, wxi, t, y, k1, work)
        for j in range(d):
            ytmp[j] = y[j] + 0.5 * h * k1[j]
        _gesc_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, wxi, t + 0.5 * h, ytmp, k2, work)
        for j in range(d):
            ytmp[j] = y[j] + 0.5 * h * k2[j]
        _gesc_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, wxi, t + 0.5 * h, ytmp, k3, work)
        for j in range(d):
            ytmp[j] = y[j] + h * k3[j]
        _gesc_rhs(kind, j_opt, star, hmat, amps, rates, omega, k, wxi, t + h, ytmp, k4, work)
        for j in range(d):
            y[j] = y[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        ok = True
        for j in range(d):
            if not np.isfinite(y[j]):
                ok = False
        if not ok:
            for j in range(d):
                fail_state[j] = y[j]
            return 0, step + 1
        if (step + 1) % stride == 0 or step + 1 == nsteps:
            times[rec] = t0 + (step + 1) * h
            for j in range(d):
                states[rec, j] = y[j]
            rec += 1
    return 0, -1


@_maybe_njit
def _avg_rhs(kind, j_opt, star, hmat, s_nodes, m_nodes, k, eps, wl, wxi, y, out, work):
    n = m_nodes.shape[0]
    n_q = m_nodes.shape[1]
    xi = y[2 * n]
    j_center = _cost_val(kind, j_opt, star, hmat, y[:n])
    j_acc = 0.0
    for i in range(n):
        work[i] = 0.0          # g_bar accumulator
        work[n + i] = 0.0      # g2_bar accumulator
    for node in range(n_q):
        for i in range(n):
            work[2 * n + i] = y[i] + s_nodes[node, i]
        meas = _cost_val(kind, j_opt, star, hmat, work[2 * n : 3 * n])
        j_acc += meas
        for i in range(n):
            work[i] += m_nodes[i, node] * (meas - j_center)
            resid = m_nodes[i, node] * (meas - xi)
            work[n + i] += resid * resid
    j_bar = j_acc / n_q
    for i in range(n):
        g_bar = work[i] / n_q
        g2_bar = work[n + i] / n_q
        v = y[n + i]
        if v < 0.0:
            v = 0.0
        out[i] = -k * g_bar / (np.sqrt(v) + eps)
        out[n + i] = wl[i] * (g2_bar - v)
    out[2 * n] = wxi * (j_bar - xi)


@_maybe_njit
def _avg_loop(kind, j_opt, star, hmat, s_nodes, m_nodes, k, eps, wl, wxi,
              y0, t0, h, nsteps, stride, times, states, fail_state):
    """RK4 over the average state [theta_bar (n), v_bar (n), xi_bar]."""
    n = m_nodes.shape[0]
    d = 2 * n + 1
    y = y0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    ytmp = np.empty(d)
    work = np.empty(3 * n)
    times[0] = t0
    for j in range(d):
        states[0, j] = y[j]
    rec = 1
    clamp_events = 0
    for step in range(nsteps):
        _avg_rhs(kind, j_opt, star, hmat, s_nodes, m_nodes, k, eps, wl, wxi, y, k1, work)
        for j in range(d):
            ytmp[j] = y[j] + 0.5 * h * k1[j]
        _avg_rhs(kind, j_opt, star, hmat, s_nodes, m_nodes, k, eps, wl, wxi, ytmp, k2, work)
        for j in range(d):
            ytmp[j] = y[j] + 0.5 * h * k2[j]
        _avg_rhs(kind, j_opt, star, hmat, s_nodes, m_nodes, k, eps, wl, wxi, ytmp, k3, work)
        for j in range(d):
            ytmp[j] = y[j] + h * k3[j]
        _avg_rhs(kind, j_opt, star, hmat, s_nodes, m_nodes, k, eps, wl, wxi, ytmp, k4, work)
        for j in range(d):
            y[j] = y[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        clamped = False
        for i in range(n):
            if y[n + i] < 0.0:
                y[n + i] = 0.0
                clamped = True
        if clamped:
            clamp_events += 1
        ok = True
        for j in range(d):
            if not np.isfinite(y[j]):
                ok = False
        if not ok:
            for j in range(d):
                fail_state[j] = y[j]
            return clamp_events, step + 1
        if (step + 1) % stride == 0 or step + 1 == nsteps:
            times[rec] = t0 + (step + 1) * h
            for j in range(d):
                states[rec, j] = y[j]
            rec += 1
    return clamp_events, -1


rmsp_loop = _rmsp_loop
gesc_loop = _gesc_loop
avg_loop = _avg_loop
