"""Numerics for fractional powers of divergence-form heat operators.

The package evaluates ``(d/dt - div(sigma grad))**s`` for ``0 < s < 1`` by
three independent routes, solves the weighted extension problem in one
extra variable, reduces exterior-data problems to local heat equations and
assembles the associated Dirichlet-to-Neumann maps.
"""

__version__ = "0.1.0"

from .grid import (
    DomainMasks,
    ExtensionField,
    Grid,
    GridError,
    GridSpec,
    SpaceTimeField,
    build_grid,
    fourier_forward,
    fourier_inverse,
    weighted_y_integral,
)
from .conductivity import ConductivityField
from .heat_kernel import (
    HeatKernel,
    build_discrete,
    check_gaussian_bounds,
    eval_exact,
    exact_kernel,
    tail_integral_fb,
)
from .semigroup import apply_semigroup
from .fracop import (
    FracConstants,
    apply_balakrishnan,
    apply_extension_trace,
    apply_symbol,
    frac_constants,
    semigroup_property_check,
)
from .extension import conjugate_transform, extend_kernel, extend_pde, inverse_conjugate
from .reduction import check_key_equation, check_one_minus_s_relation, compute_v, compute_w
from .dnmap import DNMatrix, assemble_dn_matrix, local_dn, nonlocal_dn, solve_local, solve_nonlocal, transfer_map
from .pushforward import DiffeoMap, check_cauchy_invariance, diffeo_family, pushforward_sigma
from .scenario import ConfigError, Scenario, load_scenario

__all__ = [
    "ConductivityField",
    "ConfigError",
    "DNMatrix",
    "DiffeoMap",
    "Scenario",
    "assemble_dn_matrix",
    "check_cauchy_invariance",
    "check_key_equation",
    "check_one_minus_s_relation",
    "compute_v",
    "compute_w",
    "conjugate_transform",
    "diffeo_family",
    "extend_kernel",
    "extend_pde",
    "inverse_conjugate",
    "load_scenario",
    "local_dn",
    "nonlocal_dn",
    "pushforward_sigma",
    "solve_local",
    "solve_nonlocal",
    "transfer_map",
    "DomainMasks",
    "ExtensionField",
    "FracConstants",
    "Grid",
    "GridError",
    "GridSpec",
    "HeatKernel",
    "SpaceTimeField",
    "apply_balakrishnan",
    "apply_extension_trace",
    "apply_semigroup",
    "apply_symbol",
    "build_discrete",
    "build_grid",
    "check_gaussian_bounds",
    "eval_exact",
    "exact_kernel",
    "fourier_forward",
    "fourier_inverse",
    "frac_constants",
    "semigroup_property_check",
    "tail_integral_fb",
    "weighted_y_integral",
]
