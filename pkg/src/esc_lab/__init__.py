"""Extremum seeking with RMSprop-normalized updates: simulation and analysis tools."""

from .averaging import (
    AverageMaps,
    ConvergenceError,
    Equilibrium,
    ErrorState,
    avg_maps,
    average_rhs,
    convergence_sweep,
    equilibrium,
    from_error_coords,
    to_error_coords,
)
from .cost import (
    AssumptionReport,
    CostFunction,
    check_assumptions,
    eval_cost,
    grad_cost,
    parse_cost,
    quadratic_cost,
    quartic_cost,
    shifted_quartic_cost,
)
from .dynamics import EscParams, EscState, gesc_rhs, grad_estimate, rmspesc_rhs
from .integrate import NonFiniteStateError, Trajectory, integrate_fixed, oscillation_step
from .lyapunov import (
    BoxEscapeError,
    DescentReport,
    LevelSetOracle,
    LevelSpec,
    LyapunovReport,
    lyapunov_value,
    monitor_descent,
    radius_v,
    radius_xi,
    v_theta,
)
from .quadratic import JacobianReport, QuadraticModel, fourier_coeffs, quad_avg_maps, quad_jacobian
from .signals import DitherConfig, demod_value, dither_value, new_dither
from .simulate import simulate_average, simulate_gesc, simulate_rmspesc

__version__ = "0.1.0"

__all__ = [
    "AverageMaps",
    "AssumptionReport",
    "BoxEscapeError",
    "ConvergenceError",
    "CostFunction",
    "DescentReport",
    "DitherConfig",
    "Equilibrium",
    "ErrorState",
    "EscParams",
    "EscState",
    "JacobianReport",
    "LevelSetOracle",
    "LevelSpec",
    "LyapunovReport",
    "NonFiniteStateError",
    "QuadraticModel",
    "Trajectory",
    "avg_maps",
    "average_rhs",
    "check_assumptions",
    "convergence_sweep",
    "demod_value",
    "dither_value",
    "equilibrium",
    "eval_cost",
    "fourier_coeffs",
    "from_error_coords",
    "gesc_rhs",
    "grad_cost",
    "grad_estimate",
    "integrate_fixed",
    "lyapunov_value",
    "monitor_descent",
    "new_dither",
    "oscillation_step",
    "parse_cost",
    "quad_avg_maps",
    "quad_jacobian",
    "quadratic_cost",
    "quartic_cost",
    "radius_v",
    "radius_xi",
    "rmspesc_rhs",
    "shifted_quartic_cost",
    "simulate_average",
    "simulate_gesc",
    "simulate_rmspesc",
    "to_error_coords",
    "v_theta",
]
