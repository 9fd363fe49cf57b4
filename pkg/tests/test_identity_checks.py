import math
import time

import numpy as np
import pytest

from rellich_lab.coefficient_fields import make_field
from rellich_lab.functionals import WeightParams
from rellich_lab.identity_checks import (
    RPW_TERMS,
    IdentityResidual,
    MissingDerivativeError,
    RadialWeight,
    XSpec,
    builtin_fields,
    commutator,
    constant_fn,
    coordinate_fn,
    damped_sine_fn,
    euler_x,
    lrad_probes,
    lrad_residual,
    rellich_residual,
    rellich_terms_from_rpw,
    rpw_residual,
    sinc_fn,
    smooth_battery,
    square_norm_fn,
    weighted_z,
    x_specs,
)
from rellich_lab.special_solutions import ScalarField

IDENT = make_field("identity", n=3)


def test_constant_gives_all_zero_terms():
    res = rpw_residual(IDENT, euler_x(3), constant_fn(3), 2.0, 5.0)
    assert all(v == 0.0 for v in res.rhs_terms.values()) and res.lhs == 0.0


def test_coordinate_function():
    res = rpw_residual(IDENT, euler_x(3), coordinate_fn(3), 2.0, 5.0)
    assert res.lhs == 0.0
    assert res.residual < 1e-9


def test_weighted_z_on_radial_field():
    fld = make_field("radial-scalar", n=3, c=0.5, alpha=1.0)
    res = rpw_residual(fld, weighted_z(fld, eps=0.25), sinc_fn(3), 2.0, 10.0)
    assert res.residual < 1e-7


def test_rellich_closed_form_square_norm():
    res = rellich_residual(square_norm_fn(3), 1.0, 2.0, degree=8, m_radial=8)
    assert res.lhs == pytest.approx(496 * math.pi, rel=1e-13)
    t = res.rhs_terms
    assert t["(n-2) int_U |grad f|^2"] == pytest.approx(496 * math.pi / 5, rel=1e-13)
    assert t["2 int_dU <grad f, x> df/dnu"] == pytest.approx(992 * math.pi, rel=1e-13)
    assert t["-2 int_U <grad f, x> lap f"] == pytest.approx(-2976 * math.pi / 5, rel=1e-13)
    assert res.residual < 1e-9


@pytest.mark.parametrize("f", smooth_battery(3), ids=lambda f: f.name)
def test_rellich_specialisation_term_by_term(f):
    a = rpw_residual(IDENT, euler_x(3), f, 2.0, 5.0)
    b = rellich_residual(f, 2.0, 5.0)
    mapped = rellich_terms_from_rpw(a)
    for k, v in {**b.lhs_terms, **b.rhs_terms}.items():
        assert abs(mapped[k] - v) <= 1e-10 * max(1.0, abs(v)), k


@pytest.mark.parametrize("fld", builtin_fields(2) + builtin_fields(3), ids=lambda f: f"{f.kind}-n{f.n}")
def test_rpw_battery_on_small_annulus(fld):
    for X in x_specs(fld).values():
        for f in smooth_battery(fld.n):
            res = rpw_residual(fld, X, f, 2.0, 5.0)
            assert res.residual < 1e-7, (X.name, f.name, res.residual)


def test_rpw_refinement_reaches_rounding_floor():
    fld = make_field("rank-one-fixed", n=3, c=0.5, alpha=1.0)
    f = damped_sine_fn(3)
    res = [rpw_residual(fld, weighted_z(fld), f, 2.0, 10.0, d, m).residual for d, m in ((12, 16), (24, 32), (48, 64))]
    assert res[0] > res[1] > 1e-12 > res[2]


def test_fd_commutator_agrees_with_analytic():
    fld = make_field("rank-one-fixed", n=3, c=0.5, alpha=1.0, direction=[1.0, -1.0, 2.0])
    X = weighted_z(fld)
    f = damped_sine_fn(3)
    x = np.array([[2.0, 1.0, 2.0], [5.0, -3.0, 1.0], [-8.0, 0.5, 4.0]])
    diff = commutator(X, f, x, method="analytic") - commutator(X, f, x, method="fd")
    assert np.max(np.abs(diff)) < 1e-8
    bare = XSpec("custom", X.value)  # no Jacobian: differenced path
    a = rpw_residual(fld, X, f, 2.0, 5.0)
    b = rpw_residual(fld, bare, f, 2.0, 5.0)
    assert b.residual < 1e-7
    for k in RPW_TERMS:
        assert b.rhs_terms[k] == pytest.approx(a.rhs_terms[k], rel=1e-6, abs=1e-8)


def test_missing_second_derivatives():
    f = damped_sine_fn(3)
    bare = ScalarField(3, f.value, f.gradient, None, name="no-hessian")
    with pytest.raises(MissingDerivativeError):
        rpw_residual(IDENT, euler_x(3), bare, 2.0, 5.0, second_derivatives="analytic")
    assert rpw_residual(IDENT, euler_x(3), bare, 2.0, 5.0).residual < 1e-7


def test_residual_record_is_consistent():
    res = rpw_residual(IDENT, euler_x(3), sinc_fn(3), 2.0, 5.0)
    rec = res.to_record()
    assert rec["residual"] == abs(rec["lhs"] - rec["rhs"]) / max(abs(rec["lhs"]), abs(rec["rhs"]), 1.0)
    assert math.fsum(rec["rhs_terms"].values()) == rec["rhs"]
    assert isinstance(res.to_json(), str)


def test_lrad_examples():
    fld = make_field("rank-one-fixed", n=3, c=0.5, alpha=1.0)
    x = np.array([2.0, 1.0, 2.0])
    res = lrad_residual(fld, WeightParams(3.0, 0.4), damped_sine_fn(3), x)
    assert res.residual < 1e-12
    # u = 1: (Zh/r)^2 mu = <A grad h, grad h>, right side identically zero
    one = lrad_residual(fld, WeightParams(3.0, 0.4), constant_fn(3), x)
    assert all(v == 0 for v in one.rhs_terms.values()) and one.residual < 1e-12
    unit = RadialWeight.from_functions(lambda r: 1.0 + 0 * r, lambda r: 0.0 * r, "one")
    triv = lrad_residual(fld, unit, damped_sine_fn(3), x)
    assert triv.lhs == triv.rhs


def test_lrad_probe_suite_fast_and_exact():
    t0 = time.perf_counter()
    s = lrad_probes(10_000)
    assert time.perf_counter() - t0 < 5.0
    assert s.count == 10_000 and s.max_residual < 1e-12
