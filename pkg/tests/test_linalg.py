"""Exact linear algebra: row reduction, nullspaces, parameter-field solves."""

from fractions import Fraction

from hypothesis import given
from hypothesis import strategies as st

from sdesym.linalg import (RatFunc, mat_mul, identity_matrix, nullspace, rref,
                           solve_parampoly, transpose)
from sdesym.parampoly import ParamPoly
from strategies import CTX

F = Fraction


def test_rref_known_matrix():
    m = [[F(1), F(2), F(3)], [F(4), F(5), F(6)], [F(7), F(8), F(9)]]
    reduced, pivots = rref(m)
    assert pivots == [0, 1]
    assert reduced[0] == [F(1), F(0), F(-1)]
    assert reduced[1] == [F(0), F(1), F(2)]


def test_nullspace_known_kernel():
    m = [[F(1), F(2), F(3)], [F(4), F(5), F(6)]]
    basis = nullspace(m, 3)
    assert len(basis) == 1
    v = basis[0]
    # direction (1, -2, 1)
    assert [x / v[2] for x in v] == [F(1), F(-2), F(1)]


matrices = st.lists(
    st.lists(st.fractions(min_value=-3, max_value=3, max_denominator=4),
             min_size=3, max_size=3),
    min_size=1, max_size=4)


@given(matrices)
def test_nullspace_vectors_annihilate(m):
    basis = nullspace([list(row) for row in m], 3)
    _reduced, pivots = rref([list(row) for row in m])
    assert len(basis) == 3 - len(pivots)
    for v in basis:
        for row in m:
            assert sum(a * b for a, b in zip(row, v)) == 0


def test_ratfunc_canonical_equality():
    a = ParamPoly.param(2, 0)
    two_a = a.scale(2)
    two = ParamPoly.const(2, 2)
    one = ParamPoly.const(2, 1)
    assert RatFunc.make(two_a, two) == RatFunc.make(a, one)
    assert hash(RatFunc.make(two_a, two)) == hash(RatFunc.make(a, one))
    assert RatFunc.make(a * a, a) == RatFunc.from_poly(a)
    assert RatFunc.from_poly(ParamPoly.zero(2)).is_zero
    assert RatFunc.from_poly(two).as_const() == 2


def test_solve_parampoly_unique_solution():
    # [[a, 1], [0, 1]] x = [a + 2, 2]  ->  x = (1, 2) for all parameter values
    a = ParamPoly.param(1, 0)
    one = ParamPoly.const(1, 1)
    two = ParamPoly.const(1, 2)
    sol = solve_parampoly([[a, one], [ParamPoly.zero(1), one]],
                          [a + two, two], 1)
    assert sol is not None
    assert sol[0].as_const() == 1
    assert sol[1].as_const() == 2


def test_solve_parampoly_parameter_dependent_solution():
    # a * x = 1  ->  x = 1/a
    a = ParamPoly.param(1, 0)
    one = ParamPoly.const(1, 1)
    sol = solve_parampoly([[a]], [one], 1)
    assert sol is not None
    assert sol[0] == RatFunc.make(one, a)


def test_solve_parampoly_inconsistent():
    zero = ParamPoly.zero(1)
    one = ParamPoly.const(1, 1)
    assert solve_parampoly([[zero]], [one], 1) is None


def test_solve_parampoly_skips_zero_columns():
    one = ParamPoly.const(1, 1)
    zero = ParamPoly.zero(1)
    sol = solve_parampoly([[one, zero]], [one], 1)
    assert sol is not None
    assert sol[0].as_const() == 1
    assert sol[1].is_zero


def test_expr_matrix_helpers():
    eye = identity_matrix(CTX, 2)
    assert transpose(eye) == eye
    prod = mat_mul(eye, eye)
    assert prod[0][0] == eye[0][0]
    assert prod[0][1].is_zero
