import itertools
import math

import numpy as np
import pytest

from rellich_lab.quadrature import (
    annulus_integral,
    radial_annulus_integral,
    radial_surface_integral,
    sphere_rule,
    surface_integral,
)


def monomial_oracle(exps):
    """Closed-form integral of prod x_i^{a_i} over the unit sphere."""
    if any(a % 2 for a in exps):
        return 0.0
    num = math.prod(math.gamma((a + 1) / 2) for a in exps)
    return 2.0 * num / math.gamma((sum(exps) + len(exps)) / 2)


@pytest.mark.parametrize("n,degree", [(2, 16), (2, 40), (3, 8), (3, 24)])
def test_monomial_exactness(n, degree):
    rule = sphere_rule(n, degree)
    assert np.allclose(np.linalg.norm(rule.nodes, axis=-1), 1.0, atol=1e-14)
    for exps in itertools.product(range(degree + 1), repeat=n):
        if sum(exps) > degree:
            continue
        vals = np.prod(rule.nodes ** np.array(exps), axis=-1)
        got = float(np.sum(rule.weights * vals))
        ref = monomial_oracle(exps)
        assert abs(got - ref) <= 1e-10 * max(1.0, abs(ref)), exps


def test_weights_sum_to_sphere_measure():
    assert abs(sphere_rule(2, 16).weights.sum() - 2 * math.pi) < 1e-12
    assert len(sphere_rule(2, 16)) >= 17
    assert abs(sphere_rule(3, 31).weights.sum() - 4 * math.pi) < 1e-12 * 4 * math.pi


def test_unsupported_dimension_names_supported_set():
    with pytest.raises(ValueError, match=r"\(2, 3\)"):
        sphere_rule(4, 8)


def test_surface_examples():
    rule = sphere_rule(3, 12)
    assert abs(surface_integral(rule, 2.0, lambda x: np.ones(len(x))) - 16 * math.pi) < 1e-12
    assert abs(surface_integral(rule, 5.0, lambda x: np.linalg.norm(x, axis=-1) ** 2) - 100 * math.pi * 25) < 1e-9
    assert abs(radial_surface_integral(3, 5.0, lambda r: r**2) - 100 * math.pi * 25) < 1e-9


def test_surface_integral_reports_bad_node():
    rule = sphere_rule(3, 4)
    with pytest.raises(Exception, match="node"):
        surface_integral(rule, 2.0, lambda x: np.where(x[:, 2] > 0.5, np.nan, 1.0))


def test_annulus_examples():
    rule = sphere_rule(3, 8)
    vol = annulus_integral(rule, 1.0, 2.0, 8, lambda x: np.ones(x.shape[0]))
    assert abs(vol - 28 * math.pi / 3) < 1e-12

    R = 10.0
    ref = 4 * math.pi * (R / 2 + (math.sin(2 * R) - math.sin(4 * R)) / 4)
    sinc2 = lambda r: (np.sin(r) / r) ** 2
    assert abs(radial_annulus_integral(3, R, 2 * R, 16, sinc2) - ref) < 1e-10 * ref
    via_rule = annulus_integral(rule, R, 2 * R, 16, lambda x: sinc2(np.linalg.norm(x, axis=-1)))
    assert abs(via_rule - ref) < 1e-10 * ref
    assert annulus_integral(rule, R, 2 * R, 16, lambda x: np.zeros(x.shape[0])) == 0.0


def test_additivity_and_refinement():
    f = lambda x: np.exp(-0.1 * np.linalg.norm(x, axis=-1)) * (1 + x[:, 0] ** 2)
    rule = sphere_rule(3, 12)
    whole = annulus_integral(rule, 2.0, 9.0, 16, f)
    parts = annulus_integral(rule, 2.0, 5.0, 16, f) + annulus_integral(rule, 5.0, 9.0, 16, f)
    assert abs(whole - parts) < 1e-12 * abs(whole)
    fine = annulus_integral(sphere_rule(3, 24), 2.0, 9.0, 32, f)
    assert abs(whole - fine) < 1e-8 * abs(whole)


def test_bad_inputs():
    rule = sphere_rule(3, 4)
    with pytest.raises(ValueError):
        surface_integral(rule, 1.0, lambda x: np.ones(len(x)))
    with pytest.raises(ValueError):
        annulus_integral(rule, 2.0, 3.0, 4, lambda x: np.ones(len(x)))
    with pytest.raises(ValueError):
        sphere_rule(3, 129)
