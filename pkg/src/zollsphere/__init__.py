"""Zoll families of minimal hypersurfaces for conformal metrics on spheres.

Modules
-------
sphere_core
    Harmonics, quadrature, direction grids and chart families.
equator_graphs
    Graphs over equators, Gauss map, dual hypersurfaces and intersections.
variational
    Area, Euler-Lagrange operator, Jacobi operators and the center map.
funk_transform
    Funk transform, its dual, the kernel of F F* and a right-inverse.
zoll_solver
    The map Lambda, the approximate right-inverse and the corrector.
killing_metrics
    Metrics from Killing two-tensors on S^3 and their rigidity.
cli
    Command-line entry point.
"""

from .sphere_core import (
    DirectionGrid,
    HarmonicField,
    chart_family,
    harmonic_basis,
    helmholtz_solve,
    make_direction_grid,
    sphere_quadrature,
)
from .equator_graphs import AnalyticGraphField, GridGraphField, intersect_graphs, zero_field
from .variational import area, area_profile, el_operator, jacobi_assemble, solution_map
from .funk_transform import (
    assemble_L,
    funk_dual,
    funk_forward,
    kernel_value,
    right_inverse,
    round_funk_spectrum,
)
from .zoll_solver import (
    ZollState,
    deform,
    kernel_seed,
    lambda_map,
    normalize_zprime,
    round_state,
    verify_zoll,
)
from .killing_metrics import diag_tensor, metric_from_killing, rigidity_kernel

__version__ = "0.1.0"

__all__ = [
    "DirectionGrid",
    "HarmonicField",
    "chart_family",
    "harmonic_basis",
    "helmholtz_solve",
    "make_direction_grid",
    "sphere_quadrature",
    "AnalyticGraphField",
    "GridGraphField",
    "intersect_graphs",
    "zero_field",
    "area",
    "area_profile",
    "el_operator",
    "jacobi_assemble",
    "solution_map",
    "assemble_L",
    "funk_dual",
    "funk_forward",
    "kernel_value",
    "right_inverse",
    "round_funk_spectrum",
    "ZollState",
    "deform",
    "kernel_seed",
    "lambda_map",
    "normalize_zprime",
    "round_state",
    "verify_zoll",
    "diag_tensor",
    "metric_from_killing",
    "rigidity_kernel",
]
