import math

import numpy as np

from rellich_lab._numerics import loglog_fit, ordered_map, pairwise_sum, quasi_uniform_directions


def test_pairwise_sum_order_is_fixed():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(10_001)
    assert pairwise_sum(v) == pairwise_sum(v.copy())
    assert abs(pairwise_sum(v) - math.fsum(v)) < 1e-12


def test_pairwise_sum_keeps_complex():
    assert pairwise_sum(np.array([1 + 1j, 2 - 3j])) == 3 - 2j


def test_loglog_fit_exact_power():
    x = np.geomspace(1, 100, 12)
    fit = loglog_fit(x, 3 * x**-1.5)
    assert abs(fit.slope + 1.5) < 1e-12
    assert fit.half_width < 1e-10
    assert fit.defined


def test_loglog_fit_below_floor_is_undefined():
    fit = loglog_fit([1, 2, 3], [1e-16, 0.0, 1e-15])
    assert not fit.defined and math.isnan(fit.slope)


def test_ordered_map_preserves_order(monkeypatch):
    monkeypatch.setenv("RELLICH_LAB_THREADS", "4")
    assert ordered_map(lambda k: k * k, range(50)) == [k * k for k in range(50)]


def test_directions_are_unit():
    for n in (2, 3, 5):
        d = quasi_uniform_directions(n, 40)
        assert np.allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-14)
