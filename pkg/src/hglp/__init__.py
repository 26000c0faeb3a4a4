"""Numerical toolkit for anisotropic group calculus and square functions."""

from .calculus import (
    HomogeneityLattice,
    a_bar,
    hom_degree,
    left_derivative,
    right_derivative,
    schwartz_seminorm,
    taylor_poly,
)
from .convops import (
    MaximalParams,
    ScaleGrid,
    WeightSpec,
    ap_constant,
    area_integral,
    convolve,
    dilate_kernel,
    discrete_square,
    g_function,
    grand_maximal,
    hl_maximal,
    np_for,
    peetre_max,
    power_weight,
    scale_fields,
    scale_op,
    unit_weight,
    weighted_lp_norm,
)
from .errors import HGLPError
from .grids import GridSpec, SampledFunction
from .groups import (
    GroupSpec,
    PolarQuadrature,
    abelian,
    dilate,
    group_from_name,
    heisenberg,
    hom_norm,
    inverse,
    multiply,
    polar_integrate,
    polar_quadrature,
    validate_group,
)
from .kernels import (
    KernelSpec,
    corr_decay,
    heat_family,
    moment,
    resolve_kernel,
    sublaplacian,
    unit_bump,
    vanishing_moment_kernel,
)
from .reproducing import (
    ReproducingPair,
    factorized_family,
    fit_normalizer,
    heat_pair,
    resolve_pair,
    tail_kernel,
    truncated_synthesis,
)

__version__ = "0.1.0"
