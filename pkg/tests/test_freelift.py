import itertools
from fractions import Fraction

import numpy as np
import pytest

from ccgeom.flows import exp_combination
from ccgeom.freelift import (
    bernoulli_plus,
    free_dimension_oracle,
    free_realization,
    hall_basis,
    lift_system,
    project,
    verify_realization,
)
from ccgeom.polyalg import PolyVectorField, is_homogeneous
from ccgeom.quasimetric import RhoContext, Status, ball_sample
from ccgeom.spacefile import catalog_system, parse_space
from ccgeom.structure import PointClass, classify_point, enumerate_commutators, filtration_dims

UNIT_EUCLID = """[coordinates]
x, y, z
[fields]
A = [1, 0, 0]
B = [0, 1, 0]
C = [0, 0, 1]
[weights]
A = 1
B = 1
C = 1
"""


def _weight_cases():
    for q in (1, 2, 3):
        for w in itertools.combinations_with_replacement((1, 2), q):
            for M in range(max(w), 5):
                yield q, w, M


@pytest.mark.parametrize("q,w,M", list(_weight_cases()))
def test_hall_dimension_matches_word_oracle(q, w, M):
    assert hall_basis(q, w, M).dim == free_dimension_oracle(q, w, M)


def test_hall_examples():
    assert hall_basis(2, (1, 1), 1).labels() == ["x1", "x2"]
    assert [hall_basis(2, (1, 1), M).dim for M in (2, 3, 4, 5)] == [3, 5, 8, 14]
    assert hall_basis(2, (1, 1), 3).labels() == ["x1", "x2", "[x1,x2]", "[x1,[x1,x2]]", "[x2,[x1,x2]]"]
    assert hall_basis(2, (1, 2), 4).dim == 4


def test_bernoulli_numbers():
    assert [bernoulli_plus(n) for n in range(5)] == [1, Fraction(1, 2), Fraction(1, 6), 0, Fraction(-1, 30)]


def test_abelian_realization_is_coordinate_fields():
    real = free_realization(hall_basis(3, (1, 1, 1), 1))
    assert real.fields == [PolyVectorField.coordinate(real.chart, k) for k in range(3)]


def test_heisenberg_realization():
    real = free_realization(hall_basis(2, (1, 1), 2))
    assert [str(f) for f in real.fields] == [
        "(1)*d_xi1 + (-1/2*xi2)*d_xi3", "(1)*d_xi2 + (1/2*xi1)*d_xi3", "(1)*d_xi3"]


@pytest.mark.parametrize("q,w,M", [(2, (1, 1), 3), (2, (1, 1), 4), (3, (1, 1, 2), 3)])
def test_realization_bracket_tables(q, w, M):
    assert verify_realization(free_realization(hall_basis(q, w, M))) == []


@pytest.fixture(scope="module")
def lifts():
    ex3 = catalog_system("example3-unit")
    heis = catalog_system("heisenberg-1")
    return {"example3-unit": lift_system(ex3, (0, 0, 0)), "heisenberg-1": lift_system(heis, (0, 0, 0)),
            "example3-graded": lift_system(catalog_system("example3-graded"), (0, 0, 0))}


def test_example3_lift_is_regular(lifts, ex3):
    ls = lifts["example3-unit"]
    assert ls.lifted.dim == hall_basis(3, (1, 1, 1), 2).dim == 6
    assert classify_point(ex3, (0, 0, 0)) == PointClass.NONREGULAR
    assert classify_point(ls.lifted, ls.lifted.anchor) == PointClass.REGULAR
    assert filtration_dims(ls.lifted, ls.lifted.anchor).dims == (3, 6)


def test_heisenberg_lift(lifts):
    ls = lifts["heisenberg-1"]
    assert ls.lifted.dim == hall_basis(3, (1, 1, 2), 2).dim == 4
    assert classify_point(ls.lifted, ls.lifted.anchor) == PointClass.REGULAR
    assert filtration_dims(ls.lifted, ls.lifted.anchor).dims[-1] == 4


def test_free_commuting_system_needs_no_tails():
    ls = lift_system(parse_space(UNIT_EUCLID), (0, 0, 0))
    assert ls.lifted.dim == 3
    assert ls.z_block == ()


def test_tails_are_homogeneous(lifts):
    for ls in lifts.values():
        w = ls.coordinate_weights
        for k, tail in enumerate(ls.tail_fields()):
            assert is_homogeneous(tail, w, -ls.lifted.weights[k])


def test_lifted_words_project_onto_base_words(lifts):
    for ls in lifts.values():
        n = ls.base.dim
        na = ls.approximation
        for cw in enumerate_commutators(ls.lifted):
            base = na.pushforward[cw.word]
            assert list(cw.field.components[:n]) == [c.embed(ls.extended_chart.names) for c in base.components]
        for cw in enumerate_commutators(ls.lifted_hat):
            hat = na.hat(cw.word)
            assert list(cw.field.components[:n]) == [c.embed(ls.extended_chart.names) for c in hat.components]


def test_projection(lifts):
    ls = lifts["example3-unit"]
    v = np.array([0.1, -0.2, 0.3])
    np.testing.assert_array_equal(project(ls, np.concatenate([v, np.zeros(3)])), v)
    rng = np.random.default_rng(2)
    for _ in range(10):
        c = rng.uniform(-0.5, 0.5, size=3)
        p = rng.uniform(-0.5, 0.5, size=6)
        lifted = exp_combination(c, ls.lifted.generators, p).endpoint
        base = exp_combination(c, ls.base.generators, project(ls, p)).endpoint
        np.testing.assert_allclose(project(ls, lifted), base, atol=1e-12)


def test_distance_does_not_increase_under_projection(lifts):
    ls = lifts["example3-unit"]
    lctx = RhoContext.from_system(ls.lifted)
    bctx = RhoContext.from_system(ls.base)
    tol = lctx.config.tol
    for seed in range(10):
        a, b = ball_sample(lctx, np.zeros(6), 0.3, 2, seed=seed)
        el = lctx.estimate(a, b)
        eb = bctx.estimate(project(ls, a), project(ls, b))
        assert el.status == eb.status == Status.CONVERGED
        assert eb.value <= el.value + 2 * tol
