from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ccgeom.flows import exp_combination, exp_product
from ccgeom.grading import (
    bch_compose,
    bch_word_coefficients,
    dilate,
    nilpotentize,
    privileged_chart,
    structure_constants,
    verify_nilpotent_approximation,
)
from ccgeom.polyalg import CoordinateChart, Polynomial, PolyVectorField, lie_bracket, linear_combination
from ccgeom.spacefile import FIXTURES, catalog_system

C3 = CoordinateChart(("c1", "c2", "c3"))


def poly(text_terms):
    return Polynomial(C3.names, text_terms)


def cfield(*comps):
    return PolyVectorField(C3, [c if isinstance(c, Polynomial) else Polynomial.constant(C3.names, c)
                                for c in comps])


@pytest.fixture(scope="module")
def approximations():
    out = {name: nilpotentize(catalog_system(name), catalog_system(name).anchor) for name in FIXTURES}
    ex3 = catalog_system("example3-unit")
    out["example3-unit@(0,1,0)"] = nilpotentize(ex3, (0, 1, 0))
    return out


def test_commuting_chart_is_a_translation(euclid):
    ch = privileged_chart(euclid, (1, 2, 3))
    assert [str(p) for p in ch.forward_polys] == ["c1 + 1", "c2 + 2", "c3 + 3"]


def test_heisenberg_chart(heis):
    ch = privileged_chart(heis, (0, 0, 0))
    assert [str(p) for p in ch.forward_polys] == ["c1", "c2", "-1/2*c1*c2 + c3"]
    np.testing.assert_array_equal(ch.forward(np.zeros(3)), 0)
    np.testing.assert_array_equal(ch.jacobian(np.zeros(3)), np.eye(3))


@pytest.mark.parametrize("name", ["heisenberg-1", "example3-graded", "heisenberg-weighted"])
def test_inverse_round_trip(name):
    sys = catalog_system(name)
    ch = privileged_chart(sys, sys.anchor)
    rng = np.random.default_rng(5)
    for p in rng.uniform(-1, 1, size=(100, 3)):
        assert np.max(np.abs(ch.inverse(ch.forward(p)) - p)) <= 1e-10


def test_pushforwards(approximations):
    na = approximations["weighted-euclidean"]
    assert [na.pushforward[(k,)] for k in range(3)] == [PolyVectorField.coordinate(C3, k) for k in range(3)]
    # the Heisenberg chart is not affine, so X1 straightens out completely
    na = approximations["heisenberg-1"]
    c1 = poly({(1, 0, 0): 1})
    assert na.pushforward[(0,)] == cfield(1, 0, 0)
    assert na.pushforward[(1,)] == cfield(0, 1, c1)
    # the three-field example at the origin: coordinates come out as (y, x, t)
    na = approximations["example3-unit"]
    assert na.pushforward[(1,)] == cfield(0, 1, c1)


def test_hat_fields(approximations):
    na = approximations["weighted-euclidean"]
    assert all(na.hat((k,)) == na.pushforward[(k,)] for k in range(3))
    na = approximations["heisenberg-1"]
    assert all(na.hat(w) == f for w, f in na.pushforward.words.items())
    na = approximations["example3-unit"]
    c1 = poly({(1, 0, 0): 1})
    assert na.hat((1,)) == cfield(0, 1, c1)
    assert na.hat((2,)) == cfield(0, 1, 0)
    assert na.hat((0, 1)) == cfield(0, 0, 1)
    assert lie_bracket(na.hat((0,)), na.hat((1,))) == cfield(0, 0, 1)


def test_regular_point_of_example3(approximations):
    na = approximations["example3-unit@(0,1,0)"]
    assert [str(p) for p in na.chart.forward_polys] == ["c2 + c3", "c1 + 1", "c2"]
    assert [na.hat((k,)) for k in range(3)] == [PolyVectorField.coordinate(C3, k) for k in range(3)]
    assert na.hat((0, 1)).is_zero()


@pytest.mark.parametrize("key", FIXTURES + ("example3-unit@(0,1,0)",))
def test_exact_graded_identities(approximations, key):
    na = approximations[key]
    assert verify_nilpotent_approximation(na) == []
    w = na.coordinate_weights
    for word, f in na.hat_fields.items():
        h = na.word_hdeg(word)
        for eps in (Fraction(1, 2), Fraction(1, 3)):
            assert f.pullback_dilation(w, eps) == f.scale(eps ** (-h))
    words = list(na.hat_fields)
    for a in words:
        for b in words:
            if na.word_hdeg(a) + na.word_hdeg(b) > na.depth:
                assert lie_bracket(na.hat(a), na.hat(b)).is_zero()


def test_hat_frame_agrees_at_anchor(approximations):
    for na in approximations.values():
        zero = [0] * 3
        for f, word in zip(na.hat_frame, na.chart.frame.words):
            assert f.evaluate(zero) == na.pushforward[word.word].evaluate(zero)


def test_rescaled_fields_converge(approximations):
    na = approximations["example3-graded"]
    pts = np.random.default_rng(0).uniform(-1, 1, size=(50, 3))
    devs = []
    for eps in [2.0 ** -k for k in range(3, 8)]:
        devs.append(max(np.max(np.abs((na.rescaled_field(w, eps) - na.hat(w)).compiled(pts)))
                        for w in na.pushforward.words))
    slope = np.polyfit(np.log([2.0 ** -k for k in range(3, 8)]), np.log(devs), 1)[0]
    assert slope >= 0.9
    assert na.rescaled_field((0,), Fraction(1, 2)).is_exact()


def test_dilation(approximations):
    ch = approximations["heisenberg-1"].chart
    p = np.array([0.3, -0.6, 0.2])
    np.testing.assert_allclose(dilate(ch, 1.0, p), p, atol=1e-15)
    np.testing.assert_array_equal(dilate(ch, 0.25, np.zeros(3)), 0)
    np.testing.assert_allclose(dilate(ch, 0.5, p), [0.15, -0.3, 0.05], atol=1e-15)


def test_structure_constants(approximations):
    assert structure_constants(approximations["weighted-euclidean"]).nonzero() == []
    sc = structure_constants(approximations["heisenberg-1"])
    assert sc.table() == [(1, 2, 3, 1)]
    assert sc.closed and sc.jacobi_residual() == 0
    sc = structure_constants(approximations["example3-unit"])
    assert sc.table() == [(1, 2, 3, 1)]


def test_bch_low_order_coefficients():
    coeffs = dict(bch_word_coefficients(3))
    assert coeffs[(0,)] == 1 and coeffs[(1,)] == 1
    # right-nested words: ab and ba both reduce to multiples of [a,b]
    assert coeffs[(0, 1)] - coeffs[(1, 0)] == Fraction(1, 2)
    assert coeffs[(0, 0, 1)] - coeffs[(0, 1, 0)] == Fraction(1, 12)


def test_bch_examples(approximations):
    sc = structure_constants(approximations["weighted-euclidean"])
    assert bch_compose(sc, [1, 2, 3], [Fraction(1, 2), 0, -1]) == [Fraction(3, 2), 2, 2]
    sc = structure_constants(approximations["heisenberg-1"])
    t, s = Fraction(2), Fraction(3)
    assert bch_compose(sc, [t, 0, 0], [0, s, 0]) == [t, s, s * t / 2]


@pytest.mark.parametrize("name", ["heisenberg-1", "example3-graded", "heisenberg-weighted"])
def test_bch_matches_flows(approximations, name):
    na = approximations[name]
    sc = structure_constants(na)
    frame = na.hat_frame
    rng = np.random.default_rng(9)
    for _ in range(5):
        a, b = rng.uniform(-0.5, 0.5, size=(2, 3))
        z = bch_compose(sc, a, b)
        composed = exp_product([(1.0, linear_combination(b.tolist(), frame)),
                                (1.0, linear_combination(a.tolist(), frame))], np.zeros(3)).endpoint
        direct = exp_combination(z, frame, np.zeros(3)).endpoint
        np.testing.assert_allclose(composed, direct, atol=1e-10)


def test_bch_associative(approximations):
    sc = structure_constants(approximations["example3-graded"])
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, b, c = ([Fraction(int(v), 8) for v in rng.integers(-8, 9, size=3)] for _ in range(3))
        assert bch_compose(sc, a, bch_compose(sc, b, c)) == bch_compose(sc, bch_compose(sc, a, b), c)


small_rationals = st.fractions(min_value=-2, max_value=2, max_denominator=8)
triples = st.lists(small_rationals, min_size=3, max_size=3)


@given(a=triples, b=triples, c=triples)
def test_bch_is_a_group_law(approximations, a, b, c):
    sc = structure_constants(approximations["heisenberg-weighted"])
    zero = [0, 0, 0]
    assert bch_compose(sc, a, zero) == list(a)
    assert bch_compose(sc, a, [-x for x in a]) == zero
    assert bch_compose(sc, a, bch_compose(sc, b, c)) == bch_compose(sc, bch_compose(sc, a, b), c)


@given(s=st.floats(0.1, 1.0), t=st.floats(0.1, 1.0),
       p=st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3))
def test_dilations_compose(approximations, s, t, p):
    ch = approximations["example3-graded"].chart
    np.testing.assert_allclose(dilate(ch, s, dilate(ch, t, p)), dilate(ch, s * t, p), rtol=1e-12, atol=1e-14)
