"""Trajectory drivers for the closed loop, its baseline, and the average system.

Each driver picks between two equivalent paths:

* compiled kernels (:mod:`esc_lab._kernels`) when the cost is a builtin
  family and numba is enabled, and
* the generic numpy path (RK4 in :mod:`esc_lab.integrate` over the rhs
  closures), which also handles parsed/user-defined costs.

``force_path="numpy"`` / ``"kernel"`` pins a path explicitly (tests and
benchmarks); the default follows ``ESC_LAB_NUMBA``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import _kernels
from .averaging import average_flat_rhs
from .cost import CostFunction
from .dynamics import EscParams, gesc_flat_rhs, rmspesc_flat_rhs
from .integrate import NonFiniteStateError, Trajectory, integrate_fixed
from .signals import DitherConfig

__all__ = ["simulate_rmspesc", "simulate_gesc", "simulate_average"]


def _resolve_path(cost: CostFunction, force_path: Optional[str]) -> str:
    if force_path not in (None, "numpy", "kernel"):
        raise ValueError("force_path must be None, 'numpy', or 'kernel'")
    if force_path == "kernel":
        if cost.kernel is None:
            raise ValueError("no compiled kernel parameterization for this cost")
        return "kernel"
    if force_path == "numpy":
        return "numpy"
    if cost.kernel is not None and _kernels.numba_enabled():
        return "kernel"
    return "numpy"


def _steps_and_buffers(t0: float, t1: float, h: float, stride: int, dim: int):
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    if not h > 0:
        raise ValueError("step size h must be positive")
    if stride < 1:
        raise ValueError("record_stride must be >= 1")
    nsteps = int(round((t1 - t0) / h))
    if nsteps < 1:
        raise ValueError("time span shorter than one step")
    n_rec = 1 + nsteps // stride + (1 if nsteps % stride else 0)
    times = np.empty(n_rec)
    states = np.empty((n_rec, dim))
    return nsteps, times, states


def _run_kernel(loop, args, t0, h, label, stride, times, states, dim):
    fail_state = np.empty(dim)
    clamp_events, fail_step = loop(*args, times, states, fail_state)
    if fail_step >= 0:
        raise NonFiniteStateError(t0 + fail_step * h, fail_state)
    return Trajectory(
        times=times,
        states=states,
        h=h,
        record_stride=stride,
        label=label,
        clamp_events=int(clamp_events),
    )


def simulate_rmspesc(
    cost: CostFunction,
    dither: DitherConfig,
    params: EscParams,
    state0,
    t0: float,
    t1: float,
    h: float,
    record_stride: int = 1,
    force_path: Optional[str] = None,
) -> Trajectory:
    """Integrate the RMSp loop from a flat state [theta (n), v (n), xi]."""
    state0 = np.asarray(state0, dtype=float).ravel()
    n = params.n
    if state0.shape != (2 * n + 1,):
        raise ValueError(f"expected flat initial state of length {2 * n + 1}")
    path = _resolve_path(cost, force_path)
    if path == "numpy":
        return integrate_fixed(
            rmspesc_flat_rhs(params, cost, dither),
            state0, t0, t1, h, record_stride,
            clamp_nonneg=range(n, 2 * n),
            label="rmspesc",
        )
    ks = cost.kernel
    nsteps, times, states = _steps_and_buffers(t0, t1, h, record_stride, 2 * n + 1)
    args = (
        ks.kind, ks.j_opt, ks.theta_star, ks.hmat,
        dither.amplitudes, dither.rates.astype(float), dither.omega,
        params.k, params.epsilon, params.omega_l, params.omega_xi,
        state0, float(t0), float(h), nsteps, int(record_stride),
    )
    return _run_kernel(_kernels.rmsp_loop, args, t0, h, "rmspesc", record_stride, times, states, 2 * n + 1)


def simulate_gesc(
    cost: CostFunction,
    dither: DitherConfig,
    params: EscParams,
    state0,
    t0: float,
    t1: float,
    h: float,
    record_stride: int = 1,
    force_path: Optional[str] = None,
) -> Trajectory:
    """Integrate the plain-gradient baseline from a flat state [theta (n), xi]."""
    state0 = np.asarray(state0, dtype=float).ravel()
    n = params.n
    if state0.shape != (n + 1,):
        raise ValueError(f"expected flat initial state of length {n + 1}")
    path = _resolve_path(cost, force_path)
    if path == "numpy":
        return integrate_fixed(
            gesc_flat_rhs(params, cost, dither),
            state0, t0, t1, h, record_stride,
            label="gesc",
        )
    ks = cost.kernel
    nsteps, times, states = _steps_and_buffers(t0, t1, h, record_stride, n + 1)
    args = (
        ks.kind, ks.j_opt, ks.theta_star, ks.hmat,
        dither.amplitudes, dither.rates.astype(float), dither.omega,
        params.k, params.omega_xi,
        state0, float(t0), float(h), nsteps, int(record_stride),
    )
    return _run_kernel(_kernels.gesc_loop, args, t0, h, "gesc", record_stride, times, states, n + 1)


def simulate_average(
    cost: CostFunction,
    dither: DitherConfig,
    params: EscParams,
    state0,
    t0: float,
    t1: float,
    h: float,
    record_stride: int = 1,
    n_q: Optional[int] = None,
    force_path: Optional[str] = None,
) -> Trajectory:
    """Integrate the autonomous average system from [theta_bar, v_bar, xi_bar]."""
    state0 = np.asarray(state0, dtype=float).ravel()
    n = params.n
    if state0.shape != (2 * n + 1,):
        raise ValueError(f"expected flat initial state of length {2 * n + 1}")
    path = _resolve_path(cost, force_path)
    if path == "numpy":
        return integrate_fixed(
            average_flat_rhs(params, cost, dither, n_q),
            state0, t0, t1, h, record_stride,
            clamp_nonneg=range(n, 2 * n),
            label="average",
        )
    ks = cost.kernel
    n_q = 256 * dither.r_max if n_q is None else int(n_q)
    phases = 2.0 * np.pi * np.arange(n_q) / n_q
    sin_rt = np.sin(dither.rates[:, None] * phases[None, :])
    s_nodes = np.ascontiguousarray((dither.amplitudes[:, None] * sin_rt).T)
    m_nodes = np.ascontiguousarray((2.0 / dither.amplitudes[:, None]) * sin_rt)
    nsteps, times, states = _steps_and_buffers(t0, t1, h, record_stride, 2 * n + 1)
    args = (
        ks.kind, ks.j_opt, ks.theta_star, ks.hmat,
        s_nodes, m_nodes,
        params.k, params.epsilon, params.omega_l, params.omega_xi,
        state0, float(t0), float(h), nsteps, int(record_stride),
    )
    return _run_kernel(_kernels.avg_loop, args, t0, h, "average", record_stride, times, states, 2 * n + 1)
