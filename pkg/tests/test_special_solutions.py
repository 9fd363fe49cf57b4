import math

import numpy as np
import pytest
from scipy import integrate, special

from rellich_lab.coefficient_fields import make_field
from rellich_lab.quadrature import sphere_rule
from rellich_lab.special_solutions import (
    EvaluationError,
    IntegrationError,
    RadialProfile,
    dopri45,
    envelope_slope,
    helmholtz_field,
    helmholtz_phi,
    helmholtz_radial,
    ode_field,
    plane_wave_constant,
    plane_wave_superposition,
    radial_residual,
    solve_radial_eigen,
)


def test_helmholtz_n3_is_sinc():
    prof = helmholtz_radial(3, 1.0, r_min=1.0, r_max=100.0)
    r = np.linspace(1.0, 100.0, 20001)
    scale = math.sqrt(2 / math.pi)
    assert np.max(np.abs(prof(r)[0] / scale - np.sin(r) / r)) < 1e-8
    assert np.max(np.abs(prof(r)[1] / scale - (np.cos(r) / r - np.sin(r) / r**2))) < 1e-7


def test_helmholtz_n2_matches_scipy_j0():
    r = np.linspace(1.0, 300.0, 3000)
    phi, dphi = helmholtz_phi(2, 2.0, r)
    k = math.sqrt(2.0)
    assert np.max(np.abs(phi - special.j0(k * r))) < 1e-10
    assert np.max(np.abs(dphi + k * special.j1(k * r))) < 1e-10


def test_radial_residual_small():
    r = np.linspace(2.0, 50.0, 200)
    res = radial_residual(3, 1.0, lambda s: helmholtz_phi(3, 1.0, s), r)
    assert np.max(np.abs(res)) < 1e-9


def test_helmholtz_field_hessian_matches_differences():
    u = helmholtz_field(3, 1.0)
    x = np.array([[3.0, -2.0, 1.0], [10.0, 4.0, -7.0]])
    H = u.hessian(x)
    h = 1e-5
    fd = np.stack(
        [(u.gradient(x + h * e) - u.gradient(x - h * e)) / (2 * h) for e in np.eye(3)], axis=-1
    )
    assert np.max(np.abs(H - fd)) < 1e-8


def test_plane_wave_matches_bessel_at_20_radii():
    rule = sphere_rule(3, 100)
    c = plane_wave_constant(3, 1.0, rule)
    assert abs(c - 4 * math.pi * math.sqrt(math.pi / 2)) < 1e-12
    d = np.array([0.3, -0.5, 0.81])
    d /= np.linalg.norm(d)
    for r in np.linspace(1.0, 50.0, 20):
        pw = plane_wave_superposition(3, 1.0, r * d, rule)
        ref = c * float(helmholtz_phi(3, 1.0, r)[0])
        assert abs(pw.real - ref) <= 1e-7 * max(abs(ref), 1e-3 * c)
        assert abs(pw.imag) < 1e-12


def test_plane_wave_rejects_low_degree():
    with pytest.raises(ValueError):
        plane_wave_superposition(3, 1.0, [1.0, 0, 0], sphere_rule(3, 10))


def test_dopri45_exponential():
    ts, ys, _ = dopri45(lambda t, y: (-y[0],), 0.0, (1.0,), 5.0, 1e-12, 0.1)
    assert abs(ys[-1, 0] - math.exp(-5.0)) < 1e-11
    assert ts[-1] == 5.0


def test_dopri45_underflow_reports_radius():
    with pytest.raises(IntegrationError) as info:
        dopri45(lambda t, y: (1.0 / (1.0 - t) ** 2,), 0.0, (0.0,), 2.0, 1e-10, 0.1)
    assert 0.9 < info.value.last_radius < 1.0


def test_ode_constant_coefficient_recovers_sinc():
    fld = make_field("identity", n=3)
    init = (math.sin(1.0), math.cos(1.0) - math.sin(1.0))
    prof = solve_radial_eigen(fld, 3, (1.0, 100.0), init, 1e-12)
    r = np.linspace(1.0, 100.0, 5001)
    assert np.max(np.abs(prof(r)[0] - np.sin(r) / r)) < 1e-8


def test_ode_variable_coefficient_against_scipy():
    fld = make_field("radial-scalar", n=3, c=0.5, alpha=1.0)
    prof = solve_radial_eigen(fld, 3, (1.0, 60.0), (1.0, 0.0), 1e-11)

    def rhs(r, y):
        a, da = 1 + 0.5 / r, -0.5 / r**2
        return [y[1], -(y[0] + da * y[1]) / a - 2 / r * y[1]]

    r = np.linspace(1.0, 60.0, 400)
    ref = integrate.solve_ivp(rhs, (1.0, 60.0), [1.0, 0.0], method="DOP853", rtol=1e-13, atol=1e-13, t_eval=r)
    assert np.max(np.abs(prof(r)[0] - ref.y[0])) < 1e-8


def test_ode_envelope_decays_like_inverse_r():
    fld = make_field("radial-scalar", n=3, c=0.5, alpha=1.0)
    prof = solve_radial_eigen(fld, 3, (1.0, 1000.0))
    fit = envelope_slope(prof, 100.0, 1000.0)
    assert abs(fit.slope + 1.0) < 0.01
    u = ode_field(fld, 3, prof)
    with pytest.raises(EvaluationError):
        u.value(np.array([1001.0, 0.0, 0.0]))


def test_ode_requires_radial_field():
    with pytest.raises(ValueError):
        solve_radial_eigen(make_field("rank-one-fixed", n=3, c=0.5), 3)


def test_profile_csv_round_trip():
    prof = helmholtz_radial(3, 1.0, r_min=1.0, r_max=5.0)
    back = RadialProfile.from_csv(prof.to_csv())
    assert np.array_equal(back.r, prof.r) and np.array_equal(back.u, prof.u)
    assert back.meta == prof.meta and back.provenance == prof.provenance
