import math
from fractions import Fraction

import numpy as np
import pytest

from ccgeom.flows import (
    DEFAULT_FLOW,
    EndpointMap,
    FlowConfig,
    LeftTrustBox,
    exp_combination,
    exp_product,
    flow,
)
from ccgeom.polyalg import CoordinateChart, Polynomial, PolyVectorField, linear_combination

from conftest import XYT, field

TOL = 10 * DEFAULT_FLOW.rtol


def test_constant_field():
    chart = CoordinateChart(("x", "y"))
    r = flow(field(chart, 1, 0), (0, 0), 1)
    np.testing.assert_array_equal(r.endpoint, [1, 0])
    assert r.method == "exact-series"


def test_linear_field_is_integrated_numerically():
    line = CoordinateChart(("x",))
    X = PolyVectorField(line, [Polynomial.var(("x",), 0)])
    r = flow(X, (1.0,), 0.7)
    assert r.method == "numeric"
    assert r.endpoint[0] == pytest.approx(math.exp(0.7), rel=1e-11)


def test_heisenberg_combination_reaches_coefficients(heis):
    rng = np.random.default_rng(3)
    for c in rng.uniform(-1, 1, size=(10, 3)):
        np.testing.assert_allclose(exp_combination(c, heis.generators, (0, 0, 0)).endpoint, c,
                                   atol=1e-15)
    Z = linear_combination([0.3, -0.2, 0.5], heis.generators)
    np.testing.assert_allclose(flow(Z, (0, 0, 0), 1).endpoint, [0.3, -0.2, 0.5], atol=1e-15)


def test_zero_coefficients_and_mapping_form(euclid):
    p = (0.1, 0.2, 0.3)
    np.testing.assert_array_equal(exp_combination([0, 0, 0], euclid.generators, p).endpoint, p)
    r = exp_combination({0: 1.0, 2: -2.0}, euclid.generators, p)
    np.testing.assert_allclose(r.endpoint, [1.1, 0.2, -1.7])


def test_exp_product_order(heis):
    X1, Y1, _ = heis.generators
    s, t = 0.7, -1.3
    a = exp_product([(s, Y1), (t, X1)], (0, 0, 0)).endpoint
    b = exp_product([(t, X1), (s, Y1)], (0, 0, 0)).endpoint
    np.testing.assert_allclose(a[:2], b[:2])
    assert a[2] - b[2] == pytest.approx(s * t, abs=1e-15)


def test_exp_product_commuting_fields():
    chart = CoordinateChart(("x", "y"))
    dx, dy = field(chart, 1, 0), field(chart, 0, 1)
    np.testing.assert_array_equal(exp_product([(1, dx)], (0, 0)).endpoint, [1, 0])
    a = exp_product([(0.5, dx), (2, dy)], (0, 0)).endpoint
    b = exp_product([(2, dy), (0.5, dx)], (0, 0)).endpoint
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, [0.5, 2])


def test_group_law_and_reversal():
    X = field(XYT, {(0, 1, 0): 1}, {(1, 0, 0): -1}, {(2, 0, 0): Fraction(1, 2)})
    p = np.array([0.3, -0.4, 0.1])
    whole = flow(X, p, 0.9).endpoint
    split = flow(X, flow(X, p, 0.4).endpoint, 0.5).endpoint
    np.testing.assert_allclose(whole, split, atol=TOL)
    back = flow(X, whole, -0.9).endpoint
    np.testing.assert_allclose(back, p, atol=TOL)


def test_exact_and_numeric_paths_agree(heis, ex3):
    rng = np.random.default_rng(0)
    for sys in (heis, ex3):
        Z = linear_combination(rng.uniform(-1, 1, size=sys.q).tolist(), sys.generators)
        p = rng.uniform(-1, 1, size=3)
        a = flow(Z, p, 1.0, method="exact-series")
        b = flow(Z, p, 1.0, method="numeric")
        np.testing.assert_allclose(a.endpoint, b.endpoint, atol=1e-11)


def test_trust_box():
    line = CoordinateChart(("x",))
    X = PolyVectorField(line, [Polynomial.var(("x",), 0, 2)])
    with pytest.raises(LeftTrustBox):
        flow(X, (1.0,), 0.99, FlowConfig(trust_half_width=10))


def test_endpoint_map_jacobian(ex3):
    em = EndpointMap(ex3.generators)
    assert em.exact
    v = np.array([0.2, -0.1, 0.3])
    w = np.array([0.4, -0.2, 0.1])
    end, J = em.with_jacobian(v, w)
    np.testing.assert_allclose(end, exp_combination(w, ex3.generators, v).endpoint, atol=1e-15)
    h = 1e-6
    for k in range(3):
        dw = np.zeros(3)
        dw[k] = h
        fd = (em(v, w + dw) - em(v, w - dw)) / (2 * h)
        np.testing.assert_allclose(J[:, k], fd, atol=1e-8)


def test_endpoint_map_numeric_fallback():
    line = CoordinateChart(("x",))
    X = PolyVectorField(line, [Polynomial.var(("x",), 0)])
    em = EndpointMap([X])
    assert not em.exact
    end, J = em.with_jacobian([1.0], [0.5])
    assert end[0] == pytest.approx(math.exp(0.5), rel=1e-10)
    assert J[0, 0] == pytest.approx(math.exp(0.5), rel=1e-8)
