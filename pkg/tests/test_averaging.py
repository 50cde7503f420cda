import numpy as np
import pytest

from esc_lab import (
    ConvergenceError,
    EscParams,
    average_rhs,
    avg_maps,
    convergence_sweep,
    equilibrium,
    from_error_coords,
    new_dither,
    quadratic_cost,
    quartic_cost,
    to_error_coords,
)
from esc_lab.averaging import avg_g2_coeffs

FIG1 = EscParams(k=1.0, epsilon=0.05, omega_l=[0.25], omega_xi=1.0)


def quad_setup():
    return quadratic_cost(1.0, 3.0), new_dither([0.2], [1], 10.0)


def quartic_setup():
    return quartic_cost(), new_dither([0.02], [1], 10.0)


def closed_form_g2(h, j_opt, a, theta, xi):
    b0 = j_opt + 0.5 * h * theta**2 + 0.25 * a * a * h
    b1 = a * h * theta
    b2 = -0.25 * a * a * h
    return (4 / a**2) * (0.5 * (b0 - 0.5 * b2 - xi) ** 2 + 1.5 * (0.5 * b1) ** 2 + 0.5 * (0.5 * b2) ** 2)


def test_quadratic_closed_forms():
    cost, dither = quad_setup()
    maps = avg_maps(cost, dither, [1.0], 0.0)
    assert maps.j_bar == pytest.approx(3.51, rel=1e-12)       # b0 at theta=1
    assert maps.g_bar == pytest.approx([1.0], rel=1e-12)      # H*theta
    # at theta=0, xi = equilibrium washout value, the squared average is b2^2/a^2
    eq = equilibrium(cost, dither, theta_init=[1.0])
    m0 = avg_maps(cost, dither, [0.0], eq.xi_star)
    assert m0.g2_bar == pytest.approx([0.0025], abs=1e-12)


def test_quartic_average_gradient_analytic():
    cost, dither = quartic_setup()
    maps = avg_maps(cost, dither, [2.0], 0.0)
    expected = 2.0**3 / 6.0 + 0.02**2 * 2.0 / 8.0   # cubic term plus a^2*theta/8 bias
    assert maps.g_bar == pytest.approx([expected], rel=1e-12)
    # quadrature already converged: a much denser rule agrees
    dense = avg_maps(cost, dither, [2.0], 0.0, n_q=4096)
    assert maps.g_bar == pytest.approx(dense.g_bar, rel=1e-13)
    assert maps.j_bar == pytest.approx(dense.j_bar, rel=1e-13)


def test_g_bar_independent_of_xi():
    cost, dither = quartic_setup()
    a = avg_maps(cost, dither, [1.7], -4.0)
    b = avg_maps(cost, dither, [1.7], 12.0)
    np.testing.assert_allclose(a.g_bar, b.g_bar, atol=1e-12)


def test_g2_nonnegative_and_xi_dependent():
    cost, dither = quad_setup()
    rng = np.random.default_rng(11)
    for _ in range(20):
        theta = rng.uniform(-3, 3, 1)
        xi = rng.uniform(-5, 5)
        maps = avg_maps(cost, dither, theta, xi)
        assert maps.g2_bar[0] >= 0.0
    a = avg_maps(cost, dither, [1.0], 0.0)
    b = avg_maps(cost, dither, [1.0], 1.0)
    assert abs(a.g2_bar[0] - b.g2_bar[0]) > 1e-6


def test_g2_quadratic_in_xi_decomposition():
    cost, dither = quartic_setup()
    theta = np.array([1.2])
    xi_ref = 0.7
    p, q, r = avg_g2_coeffs(cost, dither, theta, xi_ref)
    assert r == pytest.approx([2.0 / 0.02**2], rel=1e-12)
    for eta in (-0.9, 0.0, 0.4, 2.5):
        direct = avg_maps(cost, dither, theta, xi_ref + eta).g2_bar
        model = p - 2.0 * q * eta + r * eta**2
        np.testing.assert_allclose(model, direct, rtol=1e-10, atol=1e-12)


def test_invalid_node_count():
    cost, dither = quad_setup()
    with pytest.raises(ValueError, match="nodes"):
        avg_maps(cost, dither, [1.0], 0.0, n_q=4)


def test_average_rhs_at_equilibrium_vanishes():
    cost, dither = quad_setup()
    eq = equilibrium(cost, dither, theta_init=[1.0])
    d = average_rhs(eq.flat(), FIG1, cost, dither)
    np.testing.assert_allclose(d, np.zeros(3), atol=1e-9)


def test_average_rhs_substitution():
    cost, dither = quad_setup()
    eq = equilibrium(cost, dither, theta_init=[1.0])
    state = np.array([1.0, 0.0, eq.xi_star])
    d = average_rhs(state, FIG1, cost, dither)
    assert d[0] == pytest.approx(-1.0 / 0.05, rel=1e-10)  # -k*g/(sqrt(0)+eps)


def test_average_rhs_washout_sign():
    cost, dither = quartic_setup()
    rng = np.random.default_rng(13)
    for _ in range(10):
        theta = rng.uniform(-2, 2, 1)
        xi = rng.uniform(-2, 2)
        state = np.array([theta[0], 0.1, xi])
        d = average_rhs(state, FIG1, cost, dither)
        j_bar = avg_maps(cost, dither, theta, xi).j_bar
        assert np.sign(d[2]) == np.sign(FIG1.omega_xi * (j_bar - xi))


def test_average_rhs_rejects_negative_v():
    cost, dither = quad_setup()
    with pytest.raises(ValueError, match="negative"):
        average_rhs(np.array([1.0, -0.1, 0.0]), FIG1, cost, dither)


def test_equilibrium_quadratic_closed_form():
    cost, dither = quad_setup()
    eq = equilibrium(cost, dither, theta_init=[1.0])
    assert abs(eq.theta_star[0]) <= 1e-9
    assert eq.xi_star == pytest.approx(3.01, abs=1e-9)       # j_opt + a^2 H / 4
    assert eq.v_star == pytest.approx([0.0025], abs=1e-9)    # a^2 H^2 / 16


def test_equilibrium_quartic():
    cost, dither = quartic_setup()
    eq = equilibrium(cost, dither, theta_init=[0.5])
    assert eq.xi_star == pytest.approx(0.02**4 / 64.0, rel=1e-4)
    assert eq.v_star[0] <= 1e-12
    assert eq.grad_norm <= 1e-10


def test_equilibrium_washout_approaches_true_minimum_as_dither_shrinks():
    cost, dither = quartic_setup()
    j_min = float(cost.f(cost.theta_star))
    gaps = []
    for a0 in (0.08, 0.02, 0.005):
        eq = equilibrium(cost, dither.scaled(a0), theta_init=[0.3])
        gaps.append(abs(eq.xi_star - j_min))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[-1] < 1e-10


def test_equilibrium_default_start_uses_known_minimizer():
    cost = quadratic_cost(2.0, 1.0, [1.5])
    dither = new_dither([0.1], [1], 10.0)
    eq = equilibrium(cost, dither)  # no theta_init
    assert eq.theta_star == pytest.approx([1.5], abs=1e-9)
    assert eq.iterations <= 2


def test_equilibrium_failure_reported():
    # a cost whose averaged slope never meets the tolerance inside the budget
    cost, dither = quartic_setup()
    with pytest.raises(ConvergenceError):
        equilibrium(cost, dither, theta_init=[2.0], tol=1e-16, max_iter=5)


def test_error_coords_round_trip():
    cost, dither = quad_setup()
    eq = equilibrium(cost, dither, theta_init=[1.0])
    rng = np.random.default_rng(17)
    for _ in range(100):
        state = rng.normal(size=3)
        err = to_error_coords(state, eq)
        np.testing.assert_allclose(from_error_coords(err, eq), state, rtol=0, atol=1e-15)
    zero = to_error_coords(eq.flat(), eq)
    np.testing.assert_allclose(zero.flat(), np.zeros(3), atol=1e-15)
    err = to_error_coords(np.array([1.0, 0.0, 0.0]), eq)
    assert err.theta_err == pytest.approx([1.0 - eq.theta_star[0]])


def test_error_coords_dimension_check():
    cost, dither = quad_setup()
    eq = equilibrium(cost, dither, theta_init=[1.0])
    with pytest.raises(ValueError):
        to_error_coords(np.zeros(4), eq)


def test_sweep_quadratic_estimate_is_exact():
    cost, dither = quad_setup()
    rows = convergence_sweep(cost, dither, [1.3], [0.4, 0.2, 0.1])
    for row in rows:
        assert row.grad_error <= 1e-12


def test_sweep_quartic_second_order_rate():
    cost, dither = quartic_setup()
    rows = convergence_sweep(cost, dither, [2.0], [0.08, 0.04, 0.02, 0.01])
    for coarse, fine in zip(rows, rows[1:]):
        ratio = coarse.grad_error / fine.grad_error
        assert 3.8 <= ratio <= 4.2
    v = [row.v_star_max for row in rows]
    assert all(a > b for a, b in zip(v, v[1:]))
    assert v[-1] < 1e-10


def test_sweep_requires_decreasing_amplitudes():
    cost, dither = quartic_setup()
    with pytest.raises(ValueError, match="decreasing"):
        convergence_sweep(cost, dither, [1.0], [0.01, 0.02])
    with pytest.raises(ValueError, match="positive"):
        convergence_sweep(cost, dither, [1.0], [0.02, -0.01])
