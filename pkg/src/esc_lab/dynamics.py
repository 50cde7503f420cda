"""Right-hand sides of the closed-loop seeking dynamics.

Two controllers share the washout filter xi (a first-order low-pass whose
output is subtracted from the measurement, removing the DC component of J
before demodulation):

* RMSp controller: each parameter channel divides its demodulated gradient
  estimate by a running root-mean-square of that estimate,
  ``d theta_i/dt = -k * g_i / (sqrt(v_i) + eps)``.
* Plain-gradient baseline: ``d theta_i/dt = -k * g_i`` (no per-channel
  normalization), kept on the same washout filter so comparisons isolate
  the normalization.

Flat state layout used by the integrator: ``[theta_hat (n), v_hat (n), xi]``
for the RMSp loop and ``[theta_hat (n), xi]`` for the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostFunction
from .signals import DitherConfig, demod_value, dither_value

__all__ = [
    "EscParams",
    "EscState",
    "EscDerivative",
    "grad_estimate",
    "rmspesc_rhs",
    "gesc_rhs",
    "rmspesc_flat_rhs",
    "gesc_flat_rhs",
]


@dataclass(frozen=True)
class EscParams:
    """Controller gains: step gain k, regularizer eps, low-pass gains, washout gain."""

    k: float
    epsilon: float
    omega_l: np.ndarray
    omega_xi: float

    def __post_init__(self):
        wl = np.atleast_1d(np.asarray(self.omega_l, dtype=float))
        object.__setattr__(self, "omega_l", wl)
        if not self.k > 0:
            raise ValueError("gain k must be positive")
        if not self.epsilon > 0:
            raise ValueError("regularizer epsilon must be positive")
        if wl.ndim != 1 or wl.size < 1 or np.any(wl <= 0):
            raise ValueError("low-pass gains omega_l must be positive")
        if not self.omega_xi > 0:
            raise ValueError("washout gain omega_xi must be positive")
        wl.setflags(write=False)

    @property
    def n(self) -> int:
        return self.omega_l.size


@dataclass(frozen=True)
class EscState:
    """Full-loop state: parameter estimate, squared-estimate filters, washout state."""

    theta_hat: np.ndarray
    v_hat: np.ndarray
    xi: float

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        v = np.atleast_1d(np.asarray(self.v_hat, dtype=float))
        object.__setattr__(self, "theta_hat", th)
        object.__setattr__(self, "v_hat", v)
        object.__setattr__(self, "xi", float(self.xi))
        if v.shape != th.shape:
            raise ValueError("theta_hat and v_hat must have the same length")
        if np.any(v < 0):
            raise ValueError("v_hat components must be nonnegative")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta_hat, self.v_hat, [self.xi]])

    @classmethod
    def from_flat(cls, y: np.ndarray, n: int) -> "EscState":
        return cls(y[:n], y[n : 2 * n], y[2 * n])


@dataclass(frozen=True)
class EscDerivative:
    """Time derivative of an EscState; v_hat components may be negative here."""

    theta_hat: np.ndarray
    v_hat: np.ndarray
    xi: float

    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta_hat, self.v_hat, [self.xi]])


def grad_estimate(t: float, theta_hat, xi: float, cost: CostFunction, dither: DitherConfig) -> np.ndarray:
    """Demodulated gradient estimate g_i = m_i(t) * (J(theta_hat + s(t)) - xi)."""
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if theta_hat.shape != (cost.n,) or dither.n != cost.n:
        raise ValueError("dimension mismatch between state, cost, and dither")
    y = float(cost.f(theta_hat + dither_value(dither, t)))
    return demod_value(dither, t) * (y - xi)


def rmspesc_rhs(
    t: float,
    state: EscState,
    params: EscParams,
    cost: CostFunction,
    dither: DitherConfig,
) -> EscDerivative:
    """Time derivative of the RMSp-normalized loop at (t, state).

    Rejects negative v_hat (the integrator clamps after each step, so a
    negative filter state here means a caller bug).
    """
    if np.any(state.v_hat < 0):
        raise ValueError("negative v_hat: clamp filter states before evaluating the dynamics")
    s = dither_value(dither, t)
    m = demod_value(dither, t)
    y = float(cost.f(state.theta_hat + s))
    g = m * (y - state.xi)
    dtheta = -params.k * g / (np.sqrt(state.v_hat) + params.epsilon)
    dv = params.omega_l * (g * g - state.v_hat)
    dxi = params.omega_xi * (y - state.xi)
    return EscDerivative(dtheta, dv, float(dxi))


def gesc_rhs(
    t: float,
    theta_hat,
    xi: float,
    params: EscParams,
    cost: CostFunction,
    dither: DitherConfig,
):
    """Plain-gradient baseline: d theta/dt = -k * g, same washout filter."""
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    s = dither_value(dither, t)
    m = demod_value(dither, t)
    y = float(cost.f(theta_hat + s))
    g = m * (y - xi)
    return -params.k * g, params.omega_xi * (y - xi)


def rmspesc_flat_rhs(params: EscParams, cost: CostFunction, dither: DitherConfig):
    """Integrator-facing closure over the flat state [theta, v, xi].

    Clamps v to zero before the square root; round-off from integration can
    leave tiny negative filter states.
    """
    n = params.n
    k, eps, wl, wxi = params.k, params.epsilon, params.omega_l, params.omega_xi
    amps, rates, omega = dither.amplitudes, dither.rates, dither.omega
    f = cost.f

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        theta = y[:n]
        v = np.maximum(y[n : 2 * n], 0.0)
        xi = y[2 * n]
        sin_t = np.sin(omega * rates * t)
        meas = float(f(theta + amps * sin_t))
        g = (2.0 / amps) * sin_t * (meas - xi)
        out = np.empty(2 * n + 1)
        out[:n] = -k * g / (np.sqrt(v) + eps)
        out[n : 2 * n] = wl * (g * g - v)
        out[2 * n] = wxi * (meas - xi)
        return out

    return rhs


def gesc_flat_rhs(params: EscParams, cost: CostFunction, dither: DitherConfig):
    """Integrator-facing closure over the flat state [theta, xi]."""
    n = params.n
    k, wxi = params.k, params.omega_xi
    amps, rates, omega = dither.amplitudes, dither.rates, dither.omega
    f = cost.f

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        theta = y[:n]
        xi = y[n]
        sin_t = np.sin(omega * rates * t)
        meas = float(f(theta + amps * sin_t))
        g = (2.0 / amps) * sin_t * (meas - xi)
        out = np.empty(n + 1)
        out[:n] = -k * g
        out[n] = wxi * (meas - xi)
        return out

    return rhs
