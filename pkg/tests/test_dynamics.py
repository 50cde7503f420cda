import numpy as np
import pytest

from esc_lab import (
    EscParams,
    EscState,
    avg_maps,
    gesc_rhs,
    grad_estimate,
    new_dither,
    quadratic_cost,
    quartic_cost,
    rmspesc_rhs,
)

FIG1 = dict(k=1.0, epsilon=0.05, omega_l=[0.25], omega_xi=1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        EscParams(k=0.0, epsilon=0.05, omega_l=[0.25], omega_xi=1.0)
    with pytest.raises(ValueError):
        EscParams(k=1.0, epsilon=0.0, omega_l=[0.25], omega_xi=1.0)
    with pytest.raises(ValueError):
        EscParams(k=1.0, epsilon=0.05, omega_l=[0.0], omega_xi=1.0)
    with pytest.raises(ValueError):
        EscParams(k=1.0, epsilon=0.05, omega_l=[0.25], omega_xi=-1.0)


def test_state_validation():
    with pytest.raises(ValueError):
        EscState([1.0], [-0.1], 0.0)
    s = EscState([1.0], [0.5], 0.3)
    np.testing.assert_allclose(s.flat(), [1.0, 0.5, 0.3])
    back = EscState.from_flat(s.flat(), 1)
    np.testing.assert_allclose(back.theta_hat, s.theta_hat)


def test_grad_estimate_zero_residual():
    cost = quadratic_cost(1.0)
    dither = new_dither([0.2], [1], 10.0)
    t = 0.123
    theta = np.array([0.7])
    s = dither.amplitudes * np.sin(dither.omega * t)
    xi = float(cost.f(theta + s))
    np.testing.assert_allclose(grad_estimate(t, theta, xi, cost, dither), [0.0], atol=1e-15)


def test_grad_estimate_direct_substitution():
    # quadratic H=1, J*=0, theta=1, a=0.2, r=1, omega*t=pi/2, xi=0:
    # m = 10, J(1.2) = 0.72, estimate = 7.2
    cost = quadratic_cost(1.0)
    dither = new_dither([0.2], [1], 10.0)
    t = np.pi / 20.0
    g = grad_estimate(t, [1.0], 0.0, cost, dither)
    assert g == pytest.approx([7.2], rel=1e-12)


def test_grad_estimate_time_average_matches_average_map():
    cost = quartic_cost()
    dither = new_dither([0.02], [1], 10.0)
    theta = np.array([1.3])
    xi = 0.4
    ts = np.linspace(0.0, dither.period, 8193)
    vals = np.array([grad_estimate(t, theta, xi, cost, dither)[0] for t in ts])
    time_avg = np.trapezoid(vals, ts) / dither.period
    maps = avg_maps(cost, dither, theta, xi)
    assert time_avg == pytest.approx(maps.g_bar[0], abs=1e-9)


def test_rmspesc_rhs_substitution():
    # With g = 7.2 (from the case above), v = 0.81, Fig.-1 gains.
    cost = quadratic_cost(1.0)
    dither = new_dither([0.2], [1], 10.0)
    params = EscParams(**FIG1)
    t = np.pi / 20.0
    state = EscState([1.0], [0.81], 0.0)
    d = rmspesc_rhs(t, state, params, cost, dither)
    assert d.theta_hat == pytest.approx([-7.2 / 0.95], rel=1e-12)
    assert d.v_hat == pytest.approx([0.25 * (7.2**2 - 0.81)], rel=1e-12)
    assert d.xi == pytest.approx(0.72, rel=1e-12)


def test_rmspesc_rejects_negative_v():
    cost = quadratic_cost(1.0)
    dither = new_dither([0.2], [1], 10.0)
    params = EscParams(**FIG1)
    state = EscState([1.0], [0.81], 0.0)
    object.__setattr__(state, "v_hat", np.array([-1e-3]))
    with pytest.raises(ValueError, match="negative"):
        rmspesc_rhs(0.0, state, params, cost, dither)


def test_nonnegative_orthant_forward_invariant_boundary():
    cost = quadratic_cost(1.0)
    dither = new_dither([0.2], [1], 10.0)
    params = EscParams(**FIG1)
    # v = 0 and g = 0 (zero residual at t=0 since sin(0)=0 and xi=J(theta)):
    theta = np.array([0.5])
    xi = float(cost.f(theta))
    d0 = rmspesc_rhs(0.0, EscState(theta, [0.0], xi), params, cost, dither)
    assert d0.v_hat == pytest.approx([0.0], abs=1e-15)
    # v = 0 and g != 0 pushes v upward:
    d1 = rmspesc_rhs(np.pi / 20.0, EscState([1.0], [0.0], 0.0), params, cost, dither)
    assert d1.v_hat[0] > 0.0


def test_rhs_periodic_in_time_for_frozen_state():
    cost = quartic_cost()
    dither = new_dither([0.02], [1], 10.0)
    params = EscParams(**FIG1)
    state = EscState([1.5], [0.3], 0.2)
    for t in np.linspace(0.0, dither.period, 17):
        a = rmspesc_rhs(t, state, params, cost, dither)
        b = rmspesc_rhs(t + dither.period, state, params, cost, dither)
        np.testing.assert_allclose(a.flat(), b.flat(), atol=1e-9)


def test_estimate_linear_in_xi_with_demod_slope():
    cost = quartic_cost()
    dither = new_dither([0.02], [1], 10.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        t = rng.uniform(0, 10)
        theta = rng.uniform(-2, 2, 1)
        xi1, xi2 = rng.uniform(-3, 3, 2)
        g1 = grad_estimate(t, theta, xi1, cost, dither)
        g2 = grad_estimate(t, theta, xi2, cost, dither)
        m = (2.0 / dither.amplitudes) * np.sin(dither.omega * dither.rates * t)
        np.testing.assert_allclose(g1 - g2, m * (xi2 - xi1), rtol=1e-10, atol=1e-12)


def test_gesc_rhs():
    cost = quadratic_cost(1.0)
    dither = new_dither([0.2], [1], 10.0)
    params = EscParams(**FIG1)
    t = np.pi / 20.0
    dtheta, dxi = gesc_rhs(t, [1.0], 0.0, params, cost, dither)
    assert dtheta == pytest.approx([-7.2], rel=1e-12)
    # stationary when the estimate vanishes
    theta = np.array([0.5])
    xi = float(cost.f(theta))
    dtheta0, _ = gesc_rhs(0.0, theta, xi, params, cost, dither)
    assert dtheta0 == pytest.approx([0.0], abs=1e-15)
    # shared washout filter
    state = EscState([1.0], [0.81], 0.37)
    d_rmsp = rmspesc_rhs(t, state, params, cost, dither)
    _, dxi_g = gesc_rhs(t, state.theta_hat, state.xi, params, cost, dither)
    assert dxi_g == pytest.approx(d_rmsp.xi, rel=1e-14)


def test_dimension_mismatch_rejected():
    cost = quadratic_cost(1.0)
    dither = new_dither([0.2, 0.1], [1, 2], 10.0)
    with pytest.raises(ValueError):
        grad_estimate(0.0, [1.0], 0.0, cost, dither)
