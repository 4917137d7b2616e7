"""Volterra integral equations driven by rough signals.

Twisted increment calculus, dyadic sewing maps, Laplace kernel measures,
exact rough lifts of piecewise-linear drivers (including sampled
fractional Brownian motion), and interval-patching Picard solvers for
convolutional Young and rough Volterra equations.
"""

from .algebra import (
    TimeGrid,
    Increment1,
    Increment2,
    Increment3,
    LaplaceIncrement1,
    LaplaceIncrement2,
    LaplaceIncrement3,
    DoubleLaplaceIncrement2,
    delta1,
    delta2,
    delta_tilde,
    delta_double_tilde,
    twist,
    trace_pair,
    holder_norm2,
    holder_norm3,
    lbeta_norm,
    estimate_holder_exponent,
)
from .expkernels import e0, exp_int, ramp_int
from .laplace import (
    KernelMeasure,
    QuadratureError,
    build_quadrature,
    phi_eval,
    moment_check,
    project,
    kernel_from_spec,
)
from .sewing import (
    DyadicScheme,
    SewingResult,
    NotSewableError,
    compensated_sum,
    compensated_sum_tilde,
    lambda_dyadic,
    lambda_tilde_dyadic,
    c_mu,
    sewing_bound_check,
)
from .lift import (
    DriverPath,
    RoughLift,
    sample_fbm,
    sample_brownian,
    deterministic_driver,
    fbm_covariance,
    lift_ito_x2,
    wiener_cov_x1,
    driver_to_csv,
    driver_from_csv,
)
from .sigma import SigmaField, sigma_catalog
from .solver import (
    ControlledPath,
    LaplaceControlledPath,
    SolverConfig,
    Solution,
    SolverFailure,
    compose_sigma,
    young_integral,
    rough_integral,
    project_y,
    solve_young,
    solve_rough,
    solve_rough_ode,
)

__version__ = "0.1.0"
