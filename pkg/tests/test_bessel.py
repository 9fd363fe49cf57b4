import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from rellich_lab.bessel import bessel_j


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 1.5, 2.5, 4.0, 10.0])
def test_matches_scipy_on_wide_range(nu):
    t = np.linspace(0.0, 1000.0, 20001)
    env = np.maximum(1.0, np.sqrt(t))
    err = np.abs(bessel_j(nu, t) - special.jv(nu, t)) * env
    assert err.max() < 1e-9


def test_half_integer_closed_form():
    t = np.linspace(0.1, 200.0, 5000)
    ref = np.sqrt(2.0 / (math.pi * t)) * np.sin(t)
    assert np.max(np.abs(bessel_j(0.5, t) - ref) * np.sqrt(t)) < 1e-11


def test_origin_values():
    assert bessel_j(0.0, 0.0) == 1.0
    assert bessel_j(1.5, 0.0) == 0.0


def test_scalar_input_returns_float():
    assert isinstance(bessel_j(1.0, 3.0), float)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0, 8.0), st.floats(0.5, 300.0))
def test_three_term_recurrence(nu, t):
    lhs = bessel_j(nu - 1, t) + bessel_j(nu + 1, t)
    rhs = 2 * nu / t * bessel_j(nu, t)
    assert abs(lhs - rhs) < 1e-9 * max(1.0, 2 * nu / t)
