"""Fractional heat kernels and the nonlocal heat equation.

Kernel evaluation by Fourier quadrature, rotated contours and subordination;
the nonlocal operator by spectral multiplier or singular integral; Taylor and
Gevrey diagnostics; linear and nonlinear evolution; Monte Carlo sampling.
"""

from .core import (
    CFLError,
    ConvergenceError,
    DomainError,
    Field,
    FracHeatError,
    Grid,
    GrowthWeight,
    InsufficientDataError,
    KernelParams,
    RouteRequiredError,
    SampledKappa,
    UnsupportedRouteError,
    ValidationError,
    fractional_laplacian_constant,
    validate_params,
)
from .kernel import (
    KernelQuery,
    QuadratureSpec,
    eval_kernel,
    eval_kernel_contour,
    eval_kernel_subordination,
    eval_space_deriv,
    eval_time_deriv,
    eta1_density,
    sweep,
)
from .operator import OperatorHandle, apply_generator, apply_singular, apply_spectral, calibrate_constant
from .analytic import (
    BackwardIllPosedError,
    backward_solve,
    gevrey_fit,
    growth_gate,
    radius_estimate,
    taylor_coeffs,
)
from .solve import EvolveSpec, bound_check, duhamel_nonlinear, evolve_mild, evolve_variable_kappa
from .mc import SamplerConfig, histogram_compare, sample_position, sample_subordinator

__version__ = "0.1.0"
