"""Numerical laboratory for eigenfunctions of ``-div(A grad u) = u`` outside the unit ball."""

from .asymptotics import GrowthScan, TailScan, annulus_mass, growth_scan, lp_tail
from .bessel import bessel_j
from .coefficient_fields import (
    CoefficientField,
    DomainError,
    FieldConstructionError,
    FieldSpec,
    custom_field,
    dc1_report,
    div_z,
    make_field,
    mu,
    z_vector,
)
from .functionals import (
    MonotonicityReport,
    WeightParams,
    f_functional,
    g_functional,
    scan_f,
    scan_g,
    search_f_thresholds,
    transform_v,
    transform_w,
    weight_h,
)
from .identity_checks import IdentityResidual, lrad_residual, rellich_residual, rpw_residual
from .quadrature import SphereRule, annulus_integral, sphere_rule, surface_integral
from .special_solutions import (
    RadialProfile,
    ScalarField,
    helmholtz_field,
    helmholtz_radial,
    ode_field,
    plane_wave_superposition,
    solve_radial_eigen,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
