"""Matrix-free solver for 1D nonlocal diffusion through compound-Poisson BSDEs.

The solution of u_t = L u + g with an integrable jump kernel is the value
process of a backward SDE driven by a compound Poisson process. Marching
that BSDE backward with a theta-scheme needs no linear solves: every grid
node is updated independently from a truncated jump expansion of the
conditional expectation.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    InvalidParameterError,
    NonlocalBSDEError,
    NumericalFailureError,
    UnsupportedProblemError,
)
from .expectation import ExpectationOperator, apply, poisson_weights, truncated_mass
from .grid import (
    AdaptiveGrid,
    ExteriorPolicy,
    SolutionField,
    UniformGrid,
    interpolate,
    nearest_stencil,
    refine,
)
from .harness import SweepResult, SweepSpec, error_norms, fit_rate, read_csv, run_sweep, write_csv
from .kernels import (
    KernelSpec,
    Problem,
    benchmark_problem,
    build_nonsymmetric_constant,
    build_singular_sqrt,
    build_symmetric_constant,
    kernel_from_gamma,
)
from .oracle import brute_force_expectation, feynman_kac_estimate, feynman_kac_estimates, sample_path
from .quadrature import WeightedQuadrature, composite_trapezoid, density_weighted, gauss_jacobi_sqrt, gauss_legendre
from .stepper import AdaptiveSpec, SolverConfig, SolveResult, ThetaScheme, solve, step_back, terminal_field

__all__ = [
    "AdaptiveGrid",
    "AdaptiveSpec",
    "ConfigurationError",
    "ExpectationOperator",
    "ExteriorPolicy",
    "InvalidParameterError",
    "KernelSpec",
    "NonlocalBSDEError",
    "NumericalFailureError",
    "Problem",
    "SolutionField",
    "SolveResult",
    "SolverConfig",
    "SweepResult",
    "SweepSpec",
    "ThetaScheme",
    "UniformGrid",
    "UnsupportedProblemError",
    "WeightedQuadrature",
    "apply",
    "benchmark_problem",
    "brute_force_expectation",
    "build_nonsymmetric_constant",
    "build_singular_sqrt",
    "build_symmetric_constant",
    "composite_trapezoid",
    "density_weighted",
    "error_norms",
    "feynman_kac_estimate",
    "feynman_kac_estimates",
    "fit_rate",
    "gauss_jacobi_sqrt",
    "gauss_legendre",
    "interpolate",
    "kernel_from_gamma",
    "nearest_stencil",
    "poisson_weights",
    "read_csv",
    "refine",
    "run_sweep",
    "sample_path",
    "solve",
    "step_back",
    "terminal_field",
    "truncated_mass",
    "write_csv",
]
